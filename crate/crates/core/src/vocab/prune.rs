//! Greedy utility-preserving vocabulary pruning.
//!
//! Each round scores every removable token by how much the vocabulary
//! utility would move if that token alone were dropped, then removes the
//! lowest-impact tokens until the round's size is reached. A dropped token's
//! frequency mass moves to the pieces of its greedy longest-match
//! decomposition under the surviving vocabulary; fallback characters that are
//! not themselves in the vocabulary absorb nothing.
//!
//! Utility is tracked incrementally. With masses `m_j`, `M = Σ m_j`,
//! `S = Σ m_j ln m_j`, `n` tokens of total length `L`:
//!
//! ```text
//! H = (ln M − S / M) · n / L
//! ```
//!
//! so a candidate removal is scored from the handful of masses it touches.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::{xlnx, Entry, Vocabulary};
use crate::error::{Error, Result};
use crate::tokenizer::Trie;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub step: usize,
    pub size: usize,
    pub utility_nats: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PruneTrace {
    /// Step 0: the input vocabulary.
    pub initial: TraceRow,
    pub steps: Vec<TraceRow>,
}

impl PruneTrace {
    pub fn rows(&self) -> impl Iterator<Item = &TraceRow> {
        std::iter::once(&self.initial).chain(&self.steps)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,size,utility_nats\n");
        for r in self.rows() {
            writeln!(out, "{},{},{}", r.step, r.size, r.utility_nats).unwrap();
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Round sizes shrinking geometrically from `start` to exactly `target`.
/// Sizes strictly decrease while there is room to.
pub fn size_schedule(start: usize, target: usize, steps: usize) -> Vec<usize> {
    let ratio = target as f64 / start as f64;
    let mut prev = start;
    let mut out = Vec::with_capacity(steps);
    for i in 1..=steps {
        let raw = (start as f64 * ratio.powf(i as f64 / steps as f64)).round() as usize;
        let size = if i == steps {
            target
        } else {
            raw.min(prev.saturating_sub(1)).max(target)
        };
        out.push(size);
        prev = size;
    }
    out
}

struct State<'a> {
    texts: Vec<&'a str>,
    lens: Vec<usize>,
    mass: Vec<f64>,
    alive: Vec<bool>,
    trie: Trie,
    total_mass: f64,
    sum_xlnx: f64,
    n: usize,
    total_len: usize,
}

impl<'a> State<'a> {
    fn new(vocab: &'a Vocabulary) -> Self {
        let texts: Vec<&str> = vocab.texts().collect();
        let lens: Vec<usize> = texts.iter().map(|t| t.chars().count()).collect();
        let mass: Vec<f64> = vocab.iter().map(|(_, e)| e.freq).collect();
        State {
            trie: Trie::new(texts.iter().copied()),
            alive: vec![true; texts.len()],
            total_mass: mass.iter().sum(),
            sum_xlnx: mass.iter().map(|&m| xlnx(m)).sum(),
            n: texts.len(),
            total_len: lens.iter().sum(),
            texts,
            lens,
            mass,
        }
    }

    fn utility_of(total_mass: f64, sum_xlnx: f64, n: usize, total_len: usize) -> f64 {
        if total_mass <= 0.0 || total_len == 0 {
            return 0.0;
        }
        (total_mass.ln() - sum_xlnx / total_mass) * n as f64 / total_len as f64
    }

    fn utility(&self) -> f64 {
        Self::utility_of(self.total_mass, self.sum_xlnx, self.n, self.total_len)
    }

    /// Surviving tokens (other than `id`) that `id` decomposes into, with multiplicity.
    fn decompose(&self, id: usize) -> BTreeMap<usize, u32> {
        let mut pieces = BTreeMap::new();
        self.trie.segment(
            self.texts[id],
            |t| t as usize != id && self.alive[t as usize],
            |piece, _| {
                if let Some(p) = piece {
                    *pieces.entry(p as usize).or_insert(0) += 1;
                }
            },
        );
        pieces
    }

    /// Utility after removing `id` and moving its mass to `pieces`.
    fn utility_without(&self, id: usize, pieces: &BTreeMap<usize, u32>) -> f64 {
        let m = self.mass[id];
        let mut total = self.total_mass - m;
        let mut sum = self.sum_xlnx - xlnx(m);
        if m > 0.0 {
            for (&p, &c) in pieces {
                let add = c as f64 * m;
                total += add;
                sum += xlnx(self.mass[p] + add) - xlnx(self.mass[p]);
            }
        }
        Self::utility_of(total, sum, self.n - 1, self.total_len - self.lens[id])
    }

    fn remove(&mut self, id: usize) {
        let pieces = self.decompose(id);
        let m = self.mass[id];
        self.total_mass -= m;
        self.sum_xlnx -= xlnx(m);
        if m > 0.0 {
            for (p, c) in pieces {
                let add = c as f64 * m;
                self.total_mass += add;
                self.sum_xlnx += xlnx(self.mass[p] + add) - xlnx(self.mass[p]);
                self.mass[p] += add;
            }
        }
        self.mass[id] = 0.0;
        self.alive[id] = false;
        self.n -= 1;
        self.total_len -= self.lens[id];
    }
}

/// Prune `merged` down to `target_size` tokens over `steps` rounds.
///
/// Single-character tokens are never removed, so `target_size` may not drop
/// below their count. Frequencies of the result are renormalized.
pub fn prune_vocab(merged: &Vocabulary, target_size: usize, steps: usize) -> Result<(Vocabulary, PruneTrace)> {
    if steps == 0 {
        return Err(Error::Config("prune steps must be at least 1".into()));
    }
    let fallback = merged.fallback_count();
    if target_size < fallback {
        return Err(Error::FallbackCoverage {
            target: target_size,
            fallback,
        });
    }

    let mut state = State::new(merged);
    let initial = TraceRow {
        step: 0,
        size: merged.len(),
        utility_nats: state.utility(),
    };
    if merged.len() <= target_size {
        return Ok((merged.clone(), PruneTrace { initial, steps: vec![] }));
    }

    let mut rows = Vec::with_capacity(steps);
    for (step, size) in size_schedule(merged.len(), target_size, steps).into_iter().enumerate() {
        let remove = state.n - size;
        if remove > 0 {
            let current = state.utility();
            let mut scored: Vec<(f64, usize)> = (0..state.texts.len())
                .into_par_iter()
                .filter(|&i| state.alive[i] && state.lens[i] > 1)
                .map(|i| {
                    let pieces = state.decompose(i);
                    ((state.utility_without(i, &pieces) - current).abs(), i)
                })
                .collect();
            scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| state.texts[a.1].cmp(state.texts[b.1])));
            if scored.len() < remove {
                return Err(Error::Invariant(format!(
                    "round {} needs {remove} removals but only {} tokens are removable",
                    step + 1,
                    scored.len()
                )));
            }
            for &(_, id) in &scored[..remove] {
                state.remove(id);
            }
        }
        rows.push(TraceRow {
            step: step + 1,
            size: state.n,
            utility_nats: state.utility(),
        });
    }

    let mut out = Vocabulary::new(merged.source());
    for (i, (text, entry)) in merged.iter().enumerate() {
        if state.alive[i] {
            let freq = if state.total_mass > 0.0 {
                state.mass[i] / state.total_mass
            } else {
                0.0
            };
            out.upsert(
                text,
                Entry {
                    granularity: entry.granularity,
                    freq,
                },
            );
        }
    }
    debug_assert_eq!(out.len(), target_size);
    Ok((out, PruneTrace { initial, steps: rows }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::{vocab_utility, Granularity, Token};

    fn toy(items: &[(&str, f64)]) -> Vocabulary {
        let mut v = Vocabulary::from_tokens(
            "toy",
            items
                .iter()
                .map(|(t, f)| (Token::new(t, Granularity::Subword).unwrap(), *f)),
        )
        .unwrap();
        v.normalize();
        v
    }

    #[test]
    fn schedule_shape() {
        let s = size_schedule(100, 10, 10);
        assert_eq!(s.len(), 10);
        assert_eq!(*s.last().unwrap(), 10);
        assert!(s.windows(2).all(|w| w[0] > w[1]));
        assert!(s[0] < 100);
        assert_eq!(size_schedule(12, 11, 3), [11, 11, 11]);
    }

    #[test]
    fn incremental_utility_matches_direct() {
        let v = toy(&[("a", 3.0), ("bb", 2.0), ("ccc", 1.0), ("dd", 0.0)]);
        let state = State::new(&v);
        assert!((state.utility() - vocab_utility(&v)).abs() < 1e-12);
    }

    #[test]
    fn hundred_to_ten() {
        let items: Vec<(String, f64)> = (0..100).map(|i| (format!("t{i:03}"), 1.0 + (i % 7) as f64)).collect();
        let refs: Vec<(&str, f64)> = items.iter().map(|(t, f)| (t.as_str(), *f)).collect();
        let v = toy(&refs);
        let (out, trace) = prune_vocab(&v, 10, 10).unwrap();
        assert_eq!(out.len(), 10);
        assert_eq!(trace.steps.len(), 10);
        assert!(trace.steps.windows(2).all(|w| w[0].size > w[1].size));
        assert_eq!(trace.steps.last().unwrap().size, 10);
        assert!(out.texts().all(|t| v.contains(t)));
        assert!((out.total_freq() - 1.0).abs() < 1e-9);
        assert!((trace.steps[9].utility_nats - vocab_utility(&out)).abs() < 1e-9);
    }

    #[test]
    fn already_at_target_is_identity() {
        let v = toy(&[("ab", 1.0), ("cd", 1.0)]);
        let (out, trace) = prune_vocab(&v, 2, 10).unwrap();
        assert_eq!(out, v);
        assert!(trace.steps.is_empty());
        assert_eq!(trace.initial.size, 2);
        assert_eq!(trace.to_csv().lines().count(), 2);
    }

    #[test]
    fn fallback_tokens_protected() {
        let v = toy(&[("a", 1.0), ("b", 1.0), ("ab", 5.0), ("ba", 1.0)]);
        assert!(matches!(
            prune_vocab(&v, 1, 1),
            Err(Error::FallbackCoverage { target: 1, fallback: 2 })
        ));
        let (out, _) = prune_vocab(&v, 2, 1).unwrap();
        assert_eq!(out.texts().collect::<Vec<_>>(), ["a", "b"]);
        // "ab" (5) and "ba" (1) decompose onto a and b
        assert!((out.get("a").unwrap().freq - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mass_moves_to_decomposition() {
        let v = toy(&[("a", 1.0), ("b", 1.0), ("abab", 2.0)]);
        let (out, _) = prune_vocab(&v, 2, 1).unwrap();
        // masses a = 1 + 2*2, b = 1 + 2*2
        assert_eq!(out.get("a").unwrap().freq, 0.5);
    }

    #[test]
    fn zero_steps_rejected() {
        let v = toy(&[("ab", 1.0), ("cd", 1.0)]);
        assert!(matches!(prune_vocab(&v, 1, 0), Err(Error::Config(_))));
    }

    #[test]
    fn csv_header() {
        let v = toy(&[("ab", 1.0), ("cd", 2.0), ("ef", 3.0)]);
        let (_, trace) = prune_vocab(&v, 1, 2).unwrap();
        let csv = trace.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("step,size,utility_nats"));
        assert!(lines.next().unwrap().starts_with("0,3,"));
        assert_eq!(lines.count(), 2);
    }
}
