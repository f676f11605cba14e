use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Entry, Granularity, Vocabulary};
use crate::error::{Error, Result};
use crate::tokenizer::Tokenizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeKind {
    /// Union of base and task, then pruned (or trimmed to a fixed mix).
    MultiGranular,
    /// Plain union, duplicates kept once.
    MergeUnion,
    /// Task vocabulary without its multi-word entries.
    TargetOnly,
    BaseOnly,
    MultiwordOnly,
}

impl MergeKind {
    pub const ALL: [MergeKind; 5] = [
        MergeKind::MultiGranular,
        MergeKind::MergeUnion,
        MergeKind::TargetOnly,
        MergeKind::BaseOnly,
        MergeKind::MultiwordOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MergeKind::MultiGranular => "multi_granular",
            MergeKind::MergeUnion => "merge_union",
            MergeKind::TargetOnly => "target_only",
            MergeKind::BaseOnly => "base_only",
            MergeKind::MultiwordOnly => "multiword_only",
        }
    }
}

impl fmt::Display for MergeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MergeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        MergeKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm || (norm == "merge" && *k == MergeKind::MergeUnion))
            .ok_or_else(|| Error::Config(format!("unknown merge strategy {s:?}")))
    }
}

/// Target share of each granularity in a fixed-ratio vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GranularityMix {
    pub subword: f64,
    pub word: f64,
    pub multiword: f64,
}

impl GranularityMix {
    /// 60% subword, 30% word, 10% multi-word. The default preset.
    pub const SUBWORD_HEAVY: GranularityMix = GranularityMix {
        subword: 0.6,
        word: 0.3,
        multiword: 0.1,
    };

    /// 60% subword, 10% word, 30% multi-word.
    pub const MULTIWORD_LEANING: GranularityMix = GranularityMix {
        subword: 0.6,
        word: 0.1,
        multiword: 0.3,
    };

    pub fn validate(&self) -> Result<()> {
        let parts = [self.subword, self.word, self.multiword];
        if parts.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Config("mix shares must be non-negative".into()));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("mix shares must sum to 1".into()));
        }
        Ok(())
    }

    /// Per-granularity quotas summing to exactly `size` (largest remainder).
    pub fn quotas(&self, size: usize) -> [usize; 3] {
        let exact = [self.subword, self.word, self.multiword].map(|p| p * size as f64);
        let mut q = exact.map(|x| (x + 1e-9).floor() as usize);
        let mut rest = size.saturating_sub(q.iter().sum());
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| {
            // remainders compared at 1e-9 resolution so float noise cannot reorder ties
            let ra = ((exact[a] - q[a] as f64) * 1e9).round();
            let rb = ((exact[b] - q[b] as f64) * 1e9).round();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for i in order.into_iter().cycle() {
            if rest == 0 {
                break;
            }
            q[i] += 1;
            rest -= 1;
        }
        q
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeStrategy {
    pub kind: MergeKind,
    /// Fixed-ratio mode; only meaningful for [`MergeKind::MultiGranular`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mix: Option<GranularityMix>,
}

impl MergeStrategy {
    pub fn new(kind: MergeKind) -> Self {
        MergeStrategy { kind, mix: None }
    }

    pub fn fixed_ratio(mix: GranularityMix) -> Self {
        MergeStrategy {
            kind: MergeKind::MultiGranular,
            mix: Some(mix),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, &self.mix) {
            (_, None) => Ok(()),
            (MergeKind::MultiGranular, Some(mix)) => mix.validate(),
            (kind, Some(_)) => Err(Error::Config(format!(
                "a granularity mix is only valid for multi_granular, not {kind}"
            ))),
        }
    }
}

impl Default for MergeStrategy {
    fn default() -> Self {
        MergeStrategy::new(MergeKind::MultiGranular)
    }
}

fn union(base: &Vocabulary, task: &Vocabulary) -> Vocabulary {
    let mut out = base.clone();
    for (text, entry) in task.iter() {
        out.upsert(text, *entry);
    }
    out
}

/// Combine a base and a task vocabulary.
///
/// Duplicated texts keep the task-side entry. For `MultiGranular` this only
/// forms the union; size reduction is done by [`super::prune_vocab`] or
/// [`trim_to_mix`].
pub fn merge_vocabs(base: &Vocabulary, task: &Vocabulary, strategy: &MergeStrategy) -> Result<Vocabulary> {
    strategy.validate()?;
    let mut out = match strategy.kind {
        MergeKind::MultiGranular | MergeKind::MergeUnion => union(base, task),
        MergeKind::BaseOnly => base.clone(),
        MergeKind::TargetOnly => {
            let mut v = task.clone();
            v.retain(|_, e| e.granularity != Granularity::Multiword);
            v
        }
        MergeKind::MultiwordOnly => {
            let mut v = union(base, task);
            v.retain(|_, e| e.granularity == Granularity::Multiword);
            v
        }
    };
    if out.is_empty() {
        return Err(Error::EmptyMerge);
    }
    out.set_source(strategy.kind.as_str());
    Ok(out)
}

fn rank(vocab: &Vocabulary, granularity: Option<Granularity>) -> Vec<(&str, &Entry)> {
    let mut v: Vec<_> = vocab
        .iter()
        .filter(|(_, e)| granularity.is_none_or(|g| e.granularity == g))
        .collect();
    v.sort_by(|a, b| b.1.freq.total_cmp(&a.1.freq).then_with(|| a.0.cmp(b.0)));
    v
}

/// Trim to `size` tokens with per-granularity quotas, keeping the most
/// frequent tokens of each group. A group short of its quota hands the
/// remainder to the most frequent unused tokens of the other groups.
pub fn trim_to_mix(vocab: &Vocabulary, mix: &GranularityMix, size: usize) -> Result<Vocabulary> {
    mix.validate()?;
    if vocab.len() <= size {
        return Ok(vocab.clone());
    }
    let quotas = mix.quotas(size);
    let groups = [Granularity::Subword, Granularity::Word, Granularity::Multiword];
    let mut keep: HashSet<&str> = HashSet::with_capacity(size);
    for (g, quota) in groups.into_iter().zip(quotas) {
        keep.extend(rank(vocab, Some(g)).into_iter().take(quota).map(|(t, _)| t));
    }
    if keep.len() < size {
        let missing = size - keep.len();
        let extra: Vec<&str> = rank(vocab, None)
            .into_iter()
            .map(|(t, _)| t)
            .filter(|t| !keep.contains(t))
            .take(missing)
            .collect();
        keep.extend(extra);
    }
    let mut out = vocab.clone();
    out.retain(|t, _| keep.contains(t));
    out.normalize();
    if out.is_empty() {
        return Err(Error::EmptyMerge);
    }
    Ok(out)
}

/// Add to `task` the base subword tokens that the base tokenizer actually
/// emits on the task corpus.
pub fn inherit_subwords<I, S>(task: &mut Vocabulary, base: &Vocabulary, docs: I)
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let tokenizer = Tokenizer::new(base);
    let mut used: HashSet<String> = HashSet::new();
    for doc in docs {
        let seq = tokenizer.tokenize("", doc.as_ref());
        for piece in seq.pieces() {
            if !piece.fallback && !used.contains(piece.text) {
                used.insert(piece.text.to_string());
            }
        }
    }
    for (text, entry) in base.iter() {
        if entry.granularity == Granularity::Subword && used.contains(text) && !task.contains(text) {
            task.upsert(
                text,
                Entry {
                    granularity: Granularity::Subword,
                    freq: 0.0,
                },
            );
        }
    }
}
