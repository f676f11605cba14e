//! Importance weights and sampling without replacement via Gumbel top-k.
//!
//! Adding independent Gumbel(0, 1) noise to each log-weight and keeping the
//! k largest draws k items without replacement from the softmax of the
//! log-weights, which is the categorical distribution `w_i / Σ w` sampled
//! sequentially. Noise for a document comes from a ChaCha stream keyed by
//! `(seed, label)` and positioned by a hash of the document id, so a
//! document's draw never depends on its position, its shard, or the thread
//! that scored it.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::BucketDistribution;
use crate::error::{Error, Result};
use crate::features::{fnv1a64, FeatureVector};

/// Noise stream for importance selection.
pub const SELECTION_STREAM: u64 = u64::from_le_bytes(*b"select\0\0");
/// Noise stream for the uniform random baseline.
pub const BASELINE_STREAM: u64 = u64::from_le_bytes(*b"random\0\0");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedDoc {
    pub doc_id: String,
    pub log_weight: f64,
    pub shard_id: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Descending perturbed score.
    pub selected: Vec<String>,
    pub k: usize,
    pub n: usize,
    pub seed: u64,
    /// Set when `k` exceeded the pool and everything was taken.
    pub truncated: bool,
}

/// Per-bucket `ln p − ln q`, precomputed once per corpus pair.
#[derive(Debug, Clone)]
pub struct LogRatio {
    ratio: Vec<f64>,
}

impl LogRatio {
    pub fn new(p: &BucketDistribution, q: &BucketDistribution) -> Result<Self> {
        if p.num_buckets() != q.num_buckets() {
            return Err(Error::DimensionMismatch {
                expected: p.num_buckets(),
                found: q.num_buckets(),
            });
        }
        let ratio = p.probs().iter().zip(q.probs()).map(|(a, b)| a.ln() - b.ln()).collect();
        Ok(LogRatio { ratio })
    }

    pub fn log_weight(&self, fv: &FeatureVector) -> Result<f64> {
        if fv.num_buckets != self.ratio.len() {
            return Err(Error::DimensionMismatch {
                expected: self.ratio.len(),
                found: fv.num_buckets,
            });
        }
        Ok(fv.counts.iter().map(|&(b, c)| c as f64 * self.ratio[b as usize]).sum())
    }
}

/// `ln w = Σ_b count_b · (ln p_b − ln q_b)`; 0 for a document with no n-grams.
pub fn log_importance_weight(fv: &FeatureVector, p: &BucketDistribution, q: &BucketDistribution) -> Result<f64> {
    LogRatio::new(p, q)?.log_weight(fv)
}

fn noise_rng(seed: u64, stream: u64, doc_id: &str) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stream.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(fnv1a64(doc_id.as_bytes()));
    rng
}

/// Standard Gumbel draw for `doc_id`, a pure function of its arguments.
pub fn gumbel_noise(seed: u64, stream: u64, doc_id: &str) -> f64 {
    let u: f64 = noise_rng(seed, stream, doc_id).sample(Open01);
    -(-u.ln()).ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Scored<'a> {
    score: f64,
    doc_id: &'a str,
}

impl Eq for Scored<'_> {}

impl Ord for Scored<'_> {
    /// Higher score ranks first; on ties the smaller id does.
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.doc_id.cmp(self.doc_id))
    }
}

impl PartialOrd for Scored<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Bounded best-k collection. Merging two is associative and commutative
/// because the retained set is the top k under a total order.
#[derive(Debug, Clone)]
struct TopK<'a> {
    k: usize,
    heap: BinaryHeap<Reverse<Scored<'a>>>,
}

impl<'a> TopK<'a> {
    fn new(k: usize) -> Self {
        TopK {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    fn push(mut self, item: Scored<'a>) -> Self {
        if self.heap.len() < self.k {
            self.heap.push(Reverse(item));
        } else if let Some(Reverse(worst)) = self.heap.peek() {
            if item > *worst {
                self.heap.pop();
                self.heap.push(Reverse(item));
            }
        }
        self
    }

    fn merge(self, other: Self) -> Self {
        let (big, small) = if self.heap.len() >= other.heap.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.heap.into_iter().fold(big, |acc, Reverse(s)| acc.push(s))
    }

    fn into_sorted(self) -> Vec<Scored<'a>> {
        // ascending Reverse == descending score
        self.heap.into_sorted_vec().into_iter().map(|Reverse(s)| s).collect()
    }
}

fn perturbed_topk<'a, I>(items: I, k: usize, seed: u64, stream: u64) -> Vec<&'a str>
where
    I: IndexedParallelIterator<Item = (&'a str, f64)>,
{
    items
        .map(|(id, lw)| Scored {
            score: lw + gumbel_noise(seed, stream, id),
            doc_id: id,
        })
        .fold(|| TopK::new(k), TopK::push)
        .reduce(|| TopK::new(k), TopK::merge)
        .into_sorted()
        .into_iter()
        .map(|s| s.doc_id)
        .collect()
}

fn check_k(k: usize, n: usize) -> Result<(usize, bool)> {
    if k == 0 {
        return Err(Error::Config("selection size k must be at least 1".into()));
    }
    if n == 0 {
        return Err(Error::DegenerateInput("no documents to select from"));
    }
    if k > n {
        log::warn!("k = {k} exceeds the pool of {n} documents; selecting all");
    }
    Ok((k.min(n), k > n))
}

/// Draw `k` documents without replacement with probability proportional
/// to `exp(log_weight)`. Output is ordered by descending perturbed score.
pub fn gumbel_topk(docs: &[WeightedDoc], k: usize, seed: u64) -> Result<SelectionResult> {
    gumbel_topk_stream(docs, k, seed, SELECTION_STREAM)
}

pub fn gumbel_topk_stream(docs: &[WeightedDoc], k: usize, seed: u64, stream: u64) -> Result<SelectionResult> {
    let (take, truncated) = check_k(k, docs.len())?;
    if let Some(d) = docs.iter().find(|d| !d.log_weight.is_finite()) {
        return Err(Error::Invariant(format!(
            "non-finite log weight for document {:?}",
            d.doc_id
        )));
    }
    let items = docs.par_iter().map(|d| (d.doc_id.as_str(), d.log_weight));
    let selected = perturbed_topk(items, take, seed, stream)
        .into_iter()
        .map(str::to_string)
        .collect();
    Ok(SelectionResult {
        selected,
        k,
        n: docs.len(),
        seed,
        truncated,
    })
}

/// Uniform sampling without replacement, with the same determinism
/// guarantees as [`gumbel_topk`] but an independent noise stream.
pub fn random_select<S: AsRef<str> + Sync>(doc_ids: &[S], k: usize, seed: u64) -> Result<SelectionResult> {
    let (take, truncated) = check_k(k, doc_ids.len())?;
    let items = doc_ids.par_iter().map(|d| (d.as_ref(), 0.0));
    let selected = perturbed_topk(items, take, seed, BASELINE_STREAM)
        .into_iter()
        .map(str::to_string)
        .collect();
    Ok(SelectionResult {
        selected,
        k,
        n: doc_ids.len(),
        seed,
        truncated,
    })
}
