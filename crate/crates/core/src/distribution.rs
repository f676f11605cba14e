//! Smoothed bucket distributions and KL divergence.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;

pub const MAGIC: &[u8; 4] = b"BKDT";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

pub const DEFAULT_ALPHA: f64 = 0.01;

/// Dense per-bucket count accumulator. Merging is associative and
/// commutative, so partial sums may be built in any partition and order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketCounts {
    counts: Vec<u64>,
    docs: u64,
}

impl BucketCounts {
    pub fn new(num_buckets: usize) -> Self {
        BucketCounts {
            counts: vec![0; num_buckets],
            docs: 0,
        }
    }

    pub fn num_buckets(&self) -> usize {
        self.counts.len()
    }

    pub fn docs(&self) -> u64 {
        self.docs
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn add(&mut self, fv: &FeatureVector) -> Result<()> {
        if fv.num_buckets != self.counts.len() {
            return Err(Error::DimensionMismatch {
                expected: self.counts.len(),
                found: fv.num_buckets,
            });
        }
        for &(b, c) in &fv.counts {
            self.counts[b as usize] += c;
        }
        self.docs += 1;
        Ok(())
    }

    pub fn merge(mut self, other: &BucketCounts) -> Result<Self> {
        if other.counts.len() != self.counts.len() {
            return Err(Error::DimensionMismatch {
                expected: self.counts.len(),
                found: other.counts.len(),
            });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.docs += other.docs;
        Ok(self)
    }
}

/// Additively smoothed probabilities over `B` buckets; every entry is > 0.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketDistribution {
    probs: Vec<f64>,
    alpha: f64,
    support_total: u64,
}

impl BucketDistribution {
    /// `probs[b] = (C_b + alpha) / (C + alpha * B)`.
    pub fn from_counts(counts: &BucketCounts, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("smoothing alpha must be > 0, got {alpha}")));
        }
        let b = counts.num_buckets();
        if b == 0 {
            return Err(Error::Config("distribution needs at least one bucket".into()));
        }
        let total = counts.total();
        let denom = total as f64 + alpha * b as f64;
        let probs = counts.counts.iter().map(|&c| (c as f64 + alpha) / denom).collect();
        Ok(BucketDistribution {
            probs,
            alpha,
            support_total: total,
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_buckets(&self) -> usize {
        self.probs.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Raw count mass before smoothing.
    pub fn support_total(&self) -> u64 {
        self.support_total
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.probs.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.probs.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.alpha.to_le_bytes());
        for p in &self.probs {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    /// Decode the binary form. `support_total` is not stored there and
    /// comes back as 0; the JSON sidecar carries it.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Config(format!("bad distribution file: {msg}"));
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(bad("missing BKDT header"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let b = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let alpha = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let body = &bytes[HEADER_LEN..];
        if body.len() != b.checked_mul(8).ok_or_else(|| bad("bucket count overflow"))? {
            return Err(bad("payload length does not match bucket count"));
        }
        let probs = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(BucketDistribution {
            probs,
            alpha,
            support_total: 0,
        })
    }

    /// Writes `path` (binary) and `path` + `.json` (provenance sidecar).
    pub fn save(&self, path: impl AsRef<Path>, meta: &DistributionMeta) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))?;
        let sidecar = sidecar_path(path);
        let json = serde_json::to_string_pretty(meta).expect("meta serializes");
        fs::write(&sidecar, json + "\n").map_err(|e| Error::io(&sidecar, e))
    }

    /// Reads the binary file, and the sidecar when present.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, Option<DistributionMeta>)> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut dist = Self::from_bytes(&bytes).map_err(|e| Error::input(path, e))?;
        let sidecar = sidecar_path(path);
        let meta = match fs::read(&sidecar) {
            Ok(b) => {
                let meta: DistributionMeta = serde_json::from_slice(&b).map_err(|e| Error::input(&sidecar, e))?;
                dist.support_total = meta.support_total;
                Some(meta)
            }
            Err(_) => None,
        };
        Ok((dist, meta))
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionMeta {
    pub corpus: Vec<String>,
    pub doc_count: u64,
    pub support_total: u64,
    pub num_buckets: usize,
    pub alpha: f64,
}

pub fn estimate_distribution<'a, I>(vectors: I, num_buckets: usize, alpha: f64) -> Result<BucketDistribution>
where
    I: IntoIterator<Item = &'a FeatureVector>,
{
    let mut counts = BucketCounts::new(num_buckets);
    for fv in vectors {
        counts.add(fv)?;
    }
    BucketDistribution::from_counts(&counts, alpha)
}

fn check_dims(p: &BucketDistribution, q: &BucketDistribution) -> Result<()> {
    if p.num_buckets() != q.num_buckets() {
        return Err(Error::DimensionMismatch {
            expected: p.num_buckets(),
            found: q.num_buckets(),
        });
    }
    Ok(())
}

/// KL(p ‖ q) in nats.
pub fn kl_divergence(p: &BucketDistribution, q: &BucketDistribution) -> Result<f64> {
    check_dims(p, q)?;
    Ok(p.probs
        .iter()
        .zip(&q.probs)
        .map(|(&a, &b)| if a > 0.0 { a * (a / b).ln() } else { 0.0 })
        .sum())
}

/// KL(target ‖ random) − KL(target ‖ selected); positive when the selection
/// is closer to the target than the random baseline.
pub fn kl_reduction(
    target: &BucketDistribution,
    selected: &BucketDistribution,
    random_baseline: &BucketDistribution,
) -> Result<f64> {
    check_dims(target, selected)?;
    Ok(kl_divergence(target, random_baseline)? - kl_divergence(target, selected)?)
}
