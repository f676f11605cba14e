//! Greedy longest-match segmentation over a vocabulary, and the normalized
//! sequence length (NSL) compression ratio between two tokenizers.

use std::borrow::Cow;

use unicode_normalization::{is_nfc_quick, IsNormalized, UnicodeNormalization};

use crate::error::{Error, Result};
use crate::vocab::{Entry, Vocabulary};

#[derive(Debug, Clone, Default)]
struct Node {
    /// Sorted by char.
    children: Vec<(char, u32)>,
    token: Option<u32>,
}

/// Character trie over token texts. Token ids are vocabulary positions.
#[derive(Debug, Clone)]
pub(crate) struct Trie {
    nodes: Vec<Node>,
}

impl Trie {
    pub(crate) fn new<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut nodes = vec![Node::default()];
        for (id, text) in texts.into_iter().enumerate() {
            let mut cur = 0usize;
            for c in text.chars() {
                let next = match nodes[cur].children.binary_search_by_key(&c, |&(k, _)| k) {
                    Ok(i) => nodes[cur].children[i].1 as usize,
                    Err(i) => {
                        let n = nodes.len();
                        nodes.push(Node::default());
                        nodes[cur].children.insert(i, (c, n as u32));
                        n
                    }
                };
                cur = next;
            }
            nodes[cur].token = Some(id as u32);
        }
        Trie { nodes }
    }

    /// Longest accepted token starting at byte offset `start`, as `(id, end)`.
    #[inline]
    pub(crate) fn longest_match(&self, text: &str, start: usize, accept: impl Fn(u32) -> bool) -> Option<(u32, usize)> {
        let mut cur = 0usize;
        let mut best = None;
        for (off, c) in text[start..].char_indices() {
            let children = &self.nodes[cur].children;
            match children.binary_search_by_key(&c, |&(k, _)| k) {
                Ok(i) => cur = children[i].1 as usize,
                Err(_) => break,
            }
            if let Some(id) = self.nodes[cur].token {
                if accept(id) {
                    best = Some((id, start + off + c.len_utf8()));
                }
            }
        }
        best
    }

    /// Greedy segmentation of `text`: calls `emit(Some(id))` for matched tokens
    /// and `emit(None)` for single-character fallbacks, with the piece end.
    #[inline]
    pub(crate) fn segment(&self, text: &str, accept: impl Fn(u32) -> bool, mut emit: impl FnMut(Option<u32>, usize)) {
        let mut pos = 0;
        while pos < text.len() {
            match self.longest_match(text, pos, &accept) {
                Some((id, end)) => {
                    emit(Some(id), end);
                    pos = end;
                }
                None => {
                    let c = text[pos..].chars().next().unwrap();
                    pos += c.len_utf8();
                    emit(None, pos);
                }
            }
        }
    }
}

pub(crate) fn nfc(text: &str) -> Cow<'_, str> {
    match is_nfc_quick(text.chars()) {
        IsNormalized::Yes => Cow::Borrowed(text),
        _ => Cow::Owned(text.nfc().collect()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Piece<'a> {
    pub text: &'a str,
    pub fallback: bool,
}

/// A segmented document. Pieces are slices of the NFC-normalized text, so
/// joining them reproduces it exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub doc_id: String,
    text: String,
    /// Exclusive end offset of each piece, and whether it was a fallback.
    ends: Vec<(usize, bool)>,
    pub oov_count: usize,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ends.is_empty()
    }

    /// The normalized input text.
    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn pieces(&self) -> impl ExactSizeIterator<Item = Piece<'_>> + '_ {
        let mut start = 0;
        self.ends.iter().map(move |&(end, fallback)| {
            let p = Piece {
                text: &self.text[start..end],
                fallback,
            };
            start = end;
            p
        })
    }

    pub fn tokens(&self) -> Vec<&str> {
        self.pieces().map(|p| p.text).collect()
    }
}

/// Immutable greedy longest-match tokenizer; cheap to share across threads.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    trie: Trie,
    size: usize,
}

impl Tokenizer {
    pub fn new(vocab: &Vocabulary) -> Self {
        Tokenizer {
            trie: Trie::new(vocab.texts()),
            size: vocab.len(),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.size
    }

    /// Segment `text` left to right, always taking the longest vocabulary
    /// token at the current position. Positions no token matches emit the
    /// next character on its own and count as out-of-vocabulary.
    pub fn tokenize(&self, doc_id: &str, text: &str) -> TokenSequence {
        let text = nfc(text).into_owned();
        let mut ends = Vec::with_capacity(text.len() / 3 + 1);
        let mut oov = 0;
        self.trie.segment(
            &text,
            |_| true,
            |id, end| {
                oov += id.is_none() as usize;
                ends.push((end, id.is_none()));
            },
        );
        TokenSequence {
            doc_id: doc_id.to_string(),
            text,
            ends,
            oov_count: oov,
        }
    }

    /// Number of pieces `tokenize` would produce.
    pub fn count(&self, text: &str) -> usize {
        let text = nfc(text);
        let mut n = 0;
        self.trie.segment(&text, |_| true, |_, _| n += 1);
        n
    }

    /// Occurrence count of every vocabulary token, by vocabulary position.
    pub(crate) fn token_counts<I, S>(&self, docs: I) -> Vec<u64>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts = vec![0u64; self.size];
        for doc in docs {
            let text = nfc(doc.as_ref());
            self.trie.segment(
                &text,
                |_| true,
                |id, _| {
                    if let Some(id) = id {
                        counts[id as usize] += 1;
                    }
                },
            );
        }
        counts
    }
}

/// Replace every frequency in `vocab` with its relative frequency under
/// greedy tokenization of `docs`. Fallback emissions are not counted.
pub fn refit_frequencies<I, S>(vocab: &mut Vocabulary, docs: I)
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let counts = Tokenizer::new(vocab).token_counts(docs);
    let total: u64 = counts.iter().sum();
    let updates: Vec<(String, Entry)> = vocab
        .iter()
        .zip(&counts)
        .map(|((text, e), &c)| {
            let freq = if total == 0 { 0.0 } else { c as f64 / total as f64 };
            (
                text.to_string(),
                Entry {
                    granularity: e.granularity,
                    freq,
                },
            )
        })
        .collect();
    for (text, entry) in updates {
        vocab.upsert(&text, entry);
    }
}

/// Normalized sequence length: total candidate tokens over total reference
/// tokens on the same documents.
pub fn nsl(candidate_lengths: &[usize], reference_lengths: &[usize]) -> Result<f64> {
    if candidate_lengths.len() != reference_lengths.len() {
        return Err(Error::DegenerateInput("length lists differ in size"));
    }
    if candidate_lengths.is_empty() {
        return Err(Error::DegenerateInput("no documents"));
    }
    let reference: u64 = reference_lengths.iter().map(|&n| n as u64).sum();
    if reference == 0 {
        return Err(Error::DegenerateInput("reference token count is zero"));
    }
    let candidate: u64 = candidate_lengths.iter().map(|&n| n as u64).sum();
    Ok(candidate as f64 / reference as f64)
}
