//! Hashed n-gram count vectors.
//!
//! An n-gram's bucket is FNV-1a (64-bit) over its tokens' UTF-8 bytes joined
//! by the unit separator `0x1F`, reduced modulo the bucket count. The hash is
//! seedless so feature files stay comparable across runs and platforms.
//! Tokens that themselves contain `0x1F` can collide with multi-token
//! n-grams (`["a\x1fb"]` and `["a", "b"]` share a bucket); this is accepted.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::TokenSequence;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const JOIN: u8 = 0x1f;

#[derive(Debug, Clone, Copy)]
pub struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Fnv1a(FNV_OFFSET)
    }
}

impl Fnv1a {
    #[inline]
    pub fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(FNV_PRIME);
        }
    }

    #[inline]
    pub fn finish(self) -> u64 {
        self.0
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = Fnv1a::default();
    h.write(bytes);
    h.finish()
}

#[inline]
fn ngram_hash<S: AsRef<str>>(ngram: &[S]) -> u64 {
    let mut h = Fnv1a::default();
    for (i, tok) in ngram.iter().enumerate() {
        if i > 0 {
            h.write(&[JOIN]);
        }
        h.write(tok.as_ref().as_bytes());
    }
    h.finish()
}

/// Bucket of an n-gram in `[0, buckets)`.
#[inline]
pub fn hash_ngram<S: AsRef<str>>(ngram: &[S], buckets: usize) -> usize {
    debug_assert!(!ngram.is_empty() && buckets > 0);
    (ngram_hash(ngram) % buckets as u64) as usize
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub num_buckets: usize,
    pub ngram_orders: Vec<usize>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            num_buckets: 10_000,
            ngram_orders: vec![1, 2],
        }
    }
}

impl FeatureConfig {
    pub fn new(num_buckets: usize, ngram_orders: impl Into<Vec<usize>>) -> Result<Self> {
        let mut cfg = FeatureConfig {
            num_buckets,
            ngram_orders: ngram_orders.into(),
        };
        cfg.ngram_orders.sort_unstable();
        cfg.ngram_orders.dedup();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_buckets < 2 || self.num_buckets > u32::MAX as usize {
            return Err(Error::Config(format!(
                "bucket count must be in [2, 2^32), got {}",
                self.num_buckets
            )));
        }
        if self.ngram_orders.is_empty() || self.ngram_orders.contains(&0) {
            return Err(Error::Config("n-gram orders must be non-empty and >= 1".into()));
        }
        Ok(())
    }
}

/// Every contiguous n-gram of each requested order, grouped by order in the
/// order given, positions left to right within an order.
pub fn extract_ngrams<'a, S>(tokens: &'a [S], orders: &[usize]) -> Vec<&'a [S]> {
    orders
        .iter()
        .filter(|&&n| n >= 1)
        .flat_map(|&n| tokens.windows(n))
        .collect()
}

/// Sparse bucket counts for one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureVector {
    pub doc_id: String,
    /// `(bucket, count)` sorted by bucket, counts non-zero.
    pub counts: Vec<(u32, u64)>,
    pub total: u64,
    pub num_buckets: usize,
}

impl FeatureVector {
    pub fn empty(doc_id: impl Into<String>, num_buckets: usize) -> Self {
        FeatureVector {
            doc_id: doc_id.into(),
            counts: Vec::new(),
            total: 0,
            num_buckets,
        }
    }

    /// `doc_id TAB total TAB bucket:count,...`
    pub fn dump_line(&self) -> String {
        let mut line = format!("{}\t{}\t", self.doc_id, self.total);
        for (i, (b, c)) in self.counts.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            write!(line, "{b}:{c}").unwrap();
        }
        line
    }

    pub fn parse_dump_line(line: &str, num_buckets: usize) -> Result<Self> {
        let bad = |msg: &str| Error::Config(format!("bad feature line {line:?}: {msg}"));
        let mut parts = line.splitn(3, '\t');
        let doc_id = parts.next().ok_or_else(|| bad("missing id"))?;
        let total: u64 = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad("missing total"))?;
        let body = parts.next().ok_or_else(|| bad("missing counts"))?;
        let mut counts = Vec::new();
        for pair in body.split(',').filter(|p| !p.is_empty()) {
            let (b, c) = pair.split_once(':').ok_or_else(|| bad("expected bucket:count"))?;
            let b: u32 = b.parse().map_err(|_| bad("bucket"))?;
            let c: u64 = c.parse().map_err(|_| bad("count"))?;
            if b as usize >= num_buckets {
                return Err(Error::DimensionMismatch {
                    expected: num_buckets,
                    found: b as usize + 1,
                });
            }
            counts.push((b, c));
        }
        counts.sort_unstable();
        if counts.iter().map(|&(_, c)| c).sum::<u64>() != total {
            return Err(bad("total does not match counts"));
        }
        Ok(FeatureVector {
            doc_id: doc_id.to_string(),
            counts,
            total,
            num_buckets,
        })
    }
}

/// Histogram of n-gram buckets over `tokens`.
pub fn featurize_tokens<S: AsRef<str>>(doc_id: &str, tokens: &[S], cfg: &FeatureConfig) -> FeatureVector {
    let mut hist: HashMap<u32, u64> = HashMap::new();
    let mut total = 0;
    for ngram in extract_ngrams(tokens, &cfg.ngram_orders) {
        *hist.entry(hash_ngram(ngram, cfg.num_buckets) as u32).or_default() += 1;
        total += 1;
    }
    let mut counts: Vec<(u32, u64)> = hist.into_iter().collect();
    counts.sort_unstable();
    FeatureVector {
        doc_id: doc_id.to_string(),
        counts,
        total,
        num_buckets: cfg.num_buckets,
    }
}

pub fn featurize(doc: &TokenSequence, cfg: &FeatureConfig) -> FeatureVector {
    featurize_tokens(&doc.doc_id, &doc.tokens(), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ngram_examples() {
        let t = ["a", "b", "c"];
        let got: Vec<String> = extract_ngrams(&t, &[1, 2]).iter().map(|g| g.join("·")).collect();
        assert_eq!(got, ["a", "b", "c", "a·b", "b·c"]);
        assert!(extract_ngrams(&["a"], &[2]).is_empty());
        let got: Vec<String> = extract_ngrams(&["a", "a"], &[1, 2])
            .iter()
            .map(|g| g.join("·"))
            .collect();
        assert_eq!(got, ["a", "a", "a·a"]);
    }

    #[test]
    fn join_byte_collision_is_definitional() {
        assert_eq!(hash_ngram(&["a", "b"], 10_000), hash_ngram(&["a\u{1f}b"], 10_000));
        assert_ne!(hash_ngram(&["a", "b"], 10_000), hash_ngram(&["ab"], 10_000));
    }

    #[test]
    fn deterministic() {
        assert_eq!(hash_ngram(&["the"], 10_000), hash_ngram(&["the"], 10_000));
        assert_eq!(hash_ngram(&["the"], 10_000), 924);
    }

    #[test]
    fn featurize_examples() {
        let cfg = FeatureConfig::new(1 << 20, [1]).unwrap();
        let empty: [&str; 0] = [];
        assert_eq!(featurize_tokens("d", &empty, &cfg).total, 0);

        let fv = featurize_tokens("d", &["a", "b"], &cfg);
        let (ba, bb) = (hash_ngram(&["a"], 1 << 20) as u32, hash_ngram(&["b"], 1 << 20) as u32);
        assert_ne!(ba, bb);
        let mut expect = vec![(ba, 1), (bb, 1)];
        expect.sort();
        assert_eq!(fv.counts, expect);

        let fv = featurize_tokens("d", &["a", "a", "a"], &cfg);
        assert_eq!(fv.counts, [(ba, 3)]);
    }

    #[test]
    fn config_validation() {
        assert!(FeatureConfig::new(1, [1]).is_err());
        assert!(FeatureConfig::new(10, []).is_err());
        assert!(FeatureConfig::new(10, [0, 1]).is_err());
        assert_eq!(FeatureConfig::new(10, [2, 1, 2]).unwrap().ngram_orders, [1, 2]);
    }

    #[test]
    fn dump_round_trip_and_errors() {
        let cfg = FeatureConfig::default();
        let fv = featurize_tokens("doc-1", &["x", "y", "x"], &cfg);
        let line = fv.dump_line();
        assert!(line.starts_with("doc-1\t5\t"));
        assert_eq!(FeatureVector::parse_dump_line(&line, cfg.num_buckets).unwrap(), fv);
        assert!(FeatureVector::parse_dump_line("d\t1\t5:1", 4).is_err());
        assert!(FeatureVector::parse_dump_line("d\t2\t1:1", 4).is_err());
        let empty = FeatureVector::parse_dump_line("d\t0\t", 4).unwrap();
        assert_eq!(empty.total, 0);
    }

    proptest! {
        #[test]
        fn total_matches_window_count(
            toks in proptest::collection::vec("[a-e]{1,3}", 0..30),
            orders in proptest::collection::btree_set(1usize..5, 1..4),
        ) {
            let orders: Vec<usize> = orders.into_iter().collect();
            let cfg = FeatureConfig::new(97, orders.clone()).unwrap();
            let fv = featurize_tokens("d", &toks, &cfg);
            let expect: usize = orders.iter().map(|&n| (toks.len() + 1).saturating_sub(n)).sum();
            prop_assert_eq!(fv.total as usize, expect);
            prop_assert_eq!(fv.counts.iter().map(|c| c.1).sum::<u64>(), fv.total);
            prop_assert!(fv.counts.iter().all(|&(b, _)| (b as usize) < 97));
        }

        #[test]
        fn unigrams_ignore_order(toks in proptest::collection::vec("[a-z]{1,4}", 0..20), seed in any::<u64>()) {
            let cfg = FeatureConfig::new(101, [1]).unwrap();
            let mut shuffled = toks.clone();
            let n = shuffled.len();
            if n > 1 {
                // deterministic Fisher-Yates from the proptest seed
                let mut s = seed;
                for i in (1..n).rev() {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    shuffled.swap(i, (s >> 33) as usize % (i + 1));
                }
            }
            prop_assert_eq!(featurize_tokens("d", &toks, &cfg), featurize_tokens("d", &shuffled, &cfg));
        }
    }
}
