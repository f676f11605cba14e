//! Multi-granular vocabularies: learning task tokens, merging with a base
//! vocabulary, and pruning against the vocabulary-utility objective.

mod learn;
mod merge;
mod prune;

use std::fmt;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub use learn::{learn_task_vocab, LearnConfig, LearnStats};
pub use merge::{inherit_subwords, merge_vocabs, trim_to_mix, GranularityMix, MergeKind, MergeStrategy};
pub use prune::{prune_vocab, size_schedule, PruneTrace, TraceRow};

/// Word separators: Unicode whitespace plus ASCII punctuation.
#[inline]
pub fn is_separator(c: char) -> bool {
    c.is_whitespace() || c.is_ascii_punctuation()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Subword,
    Word,
    Multiword,
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::Subword => "subword",
            Granularity::Word => "word",
            Granularity::Multiword => "multiword",
        })
    }
}

/// A vocabulary entry's surface form and granularity.
///
/// Multiword tokens must start and end with a word character and contain at
/// least one separator. Words contain no separators. Subwords contain no
/// separators either, except for pieces made up entirely of separators
/// (`" "`, `"."`), which base vocabularies need for coverage.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    text: String,
    granularity: Granularity,
}

impl Token {
    pub fn new(text: impl AsRef<str>, granularity: Granularity) -> Result<Self> {
        let text: String = text.as_ref().nfc().collect();
        validate(&text, granularity)?;
        Ok(Token { text, granularity })
    }

    pub fn subword(text: impl AsRef<str>) -> Result<Self> {
        Token::new(text, Granularity::Subword)
    }

    pub fn word(text: impl AsRef<str>) -> Result<Self> {
        Token::new(text, Granularity::Word)
    }

    pub fn multiword(text: impl AsRef<str>) -> Result<Self> {
        Token::new(text, Granularity::Multiword)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    /// Length in Unicode scalar values.
    pub fn len(&self) -> usize {
        self.text.chars().count()
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }
}

fn validate(text: &str, granularity: Granularity) -> Result<()> {
    let bad = |reason| {
        Err(Error::InvalidToken {
            text: text.to_string(),
            reason,
        })
    };
    if text.is_empty() {
        return bad("empty text");
    }
    let seps = text.chars().filter(|&c| is_separator(c)).count();
    match granularity {
        Granularity::Word if seps > 0 => bad("word contains a separator"),
        Granularity::Subword if seps > 0 && seps != text.chars().count() => {
            bad("subword mixes separators and word characters")
        }
        Granularity::Multiword => {
            let first = text.chars().next().unwrap();
            let last = text.chars().next_back().unwrap();
            if seps == 0 {
                bad("multiword has no internal separator")
            } else if is_separator(first) || is_separator(last) {
                bad("multiword starts or ends with a separator")
            } else {
                Ok(())
            }
        }
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub granularity: Granularity,
    /// Relative frequency on the target data.
    pub freq: f64,
}

/// An ordered set of tokens with relative frequencies.
///
/// Iteration order is insertion order, which every writer preserves so that
/// vocabulary files are stable across runs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabulary {
    entries: IndexMap<String, Entry>,
    source: String,
}

impl Vocabulary {
    pub fn new(source: impl Into<String>) -> Self {
        Vocabulary {
            entries: IndexMap::new(),
            source: source.into(),
        }
    }

    pub fn from_tokens<I>(source: impl Into<String>, tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Token, f64)>,
    {
        let mut vocab = Vocabulary::new(source);
        for (token, freq) in tokens {
            vocab.insert(token, freq)?;
        }
        Ok(vocab)
    }

    pub fn insert(&mut self, token: Token, freq: f64) -> Result<()> {
        if !(freq.is_finite() && freq >= 0.0) {
            return Err(Error::InvalidToken {
                text: token.text,
                reason: "frequency must be finite and non-negative",
            });
        }
        if self.entries.contains_key(&token.text) {
            return Err(Error::DuplicateToken(token.text));
        }
        self.entries.insert(
            token.text,
            Entry {
                granularity: token.granularity,
                freq,
            },
        );
        Ok(())
    }

    /// Insert or replace, keeping the original position on replacement.
    pub(crate) fn upsert(&mut self, text: &str, entry: Entry) {
        match self.entries.get_mut(text) {
            Some(e) => *e = entry,
            None => {
                self.entries.insert(text.to_string(), entry);
            }
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn set_source(&mut self, source: impl Into<String>) {
        self.source = source.into();
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, text: &str) -> Option<&Entry> {
        self.entries.get(text)
    }

    pub fn contains(&self, text: &str) -> bool {
        self.entries.contains_key(text)
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&str, &Entry)> + '_ {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn texts(&self) -> impl ExactSizeIterator<Item = &str> + '_ {
        self.entries.keys().map(String::as_str)
    }

    pub fn count(&self, granularity: Granularity) -> usize {
        self.entries.values().filter(|e| e.granularity == granularity).count()
    }

    /// Single-character tokens. Pruning never removes these.
    pub fn fallback_count(&self) -> usize {
        self.entries.keys().filter(|t| t.chars().nth(1).is_none()).count()
    }

    pub fn retain(&mut self, mut keep: impl FnMut(&str, &Entry) -> bool) {
        self.entries.retain(|k, v| keep(k, v));
    }

    pub fn remove(&mut self, text: &str) -> Option<Entry> {
        self.entries.shift_remove(text)
    }

    /// l_v: mean token length in characters, 0 for an empty vocabulary.
    pub fn avg_token_length(&self) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        let total: usize = self.entries.keys().map(|t| t.chars().count()).sum();
        total as f64 / self.entries.len() as f64
    }

    pub fn total_freq(&self) -> f64 {
        self.entries.values().map(|e| e.freq).sum()
    }

    /// Rescale frequencies to sum to one. A vocabulary with no mass is left as is.
    pub fn normalize(&mut self) {
        let total = self.total_freq();
        if total > 0.0 {
            for e in self.entries.values_mut() {
                e.freq /= total;
            }
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let file: VocabFile = serde_json::from_slice(&bytes).map_err(|e| Error::input(path, e))?;
        let mut vocab = Vocabulary::new(file.meta.source);
        for t in file.tokens {
            let token = Token::new(&t.text, t.granularity).map_err(|e| Error::input(path, e))?;
            vocab.insert(token, t.freq).map_err(|e| Error::input(path, e))?;
        }
        Ok(vocab)
    }

    pub fn to_json(&self) -> String {
        let file = VocabFile {
            tokens: self
                .iter()
                .map(|(text, e)| TokenRecord {
                    text: text.to_string(),
                    granularity: e.granularity,
                    freq: e.freq,
                })
                .collect(),
            meta: VocabMeta {
                source: self.source.clone(),
                size: self.len(),
            },
        };
        serde_json::to_string_pretty(&file).expect("vocabulary serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    tokens: Vec<TokenRecord>,
    meta: VocabMeta,
}

#[derive(Serialize, Deserialize)]
struct TokenRecord {
    text: String,
    granularity: Granularity,
    #[serde(default)]
    freq: f64,
}

#[derive(Serialize, Deserialize)]
struct VocabMeta {
    #[serde(default)]
    source: String,
    #[serde(default)]
    size: usize,
}

#[inline]
pub(crate) fn xlnx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Vocabulary utility H_v in nats per character: the entropy of the token
/// frequency distribution divided by the mean token length.
///
/// Zero-frequency tokens contribute nothing to the entropy but still count
/// towards the mean length.
pub fn vocab_utility(vocab: &Vocabulary) -> f64 {
    let avg_len = vocab.avg_token_length();
    if avg_len == 0.0 {
        return 0.0;
    }
    let entropy: f64 = -vocab.entries.values().map(|e| xlnx(e.freq)).sum::<f64>();
    entropy / avg_len
}
