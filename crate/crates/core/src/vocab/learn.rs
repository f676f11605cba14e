use std::collections::HashMap;

use unicode_normalization::UnicodeNormalization;

use super::{is_separator, Token, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LearnConfig {
    pub max_words: usize,
    pub max_multiwords: usize,
    /// Minimum occurrences for a multiword phrase to be kept.
    pub min_multiword_count: u64,
    /// Longest phrase, in words.
    pub max_phrase_words: usize,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            max_words: 5000,
            max_multiwords: 5000,
            min_multiword_count: 5,
            max_phrase_words: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LearnStats {
    pub documents: usize,
    pub blank_skipped: usize,
}

/// Byte spans of the maximal separator-free runs in `text`.
fn word_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (is_separator(c), start) {
            (true, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    spans
}

fn top_by_count(counts: HashMap<&str, u64>, limit: usize, min_count: u64) -> Vec<(&str, u64)> {
    let mut ranked: Vec<_> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(limit);
    ranked
}

/// Mine the task vocabulary: the most frequent words and multi-word phrases
/// of the task corpus, with relative frequencies over the selected tokens.
///
/// Phrases are contiguous runs of 2..=`max_phrase_words` words whose gaps are
/// whitespace only, stored as the literal text span so that a tokenizer can
/// match them verbatim. Ties in count are broken by token text.
pub fn learn_task_vocab<I, S>(docs: I, cfg: &LearnConfig) -> Result<(Vocabulary, LearnStats)>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut stats = LearnStats::default();
    let mut texts = Vec::new();
    for doc in docs {
        stats.documents += 1;
        let doc = doc.as_ref();
        if doc.trim().is_empty() {
            stats.blank_skipped += 1;
            continue;
        }
        texts.push(doc.nfc().collect::<String>());
    }
    if texts.is_empty() {
        return Err(Error::EmptyTaskCorpus);
    }
    if stats.blank_skipped > 0 {
        log::warn!("skipped {} blank task documents", stats.blank_skipped);
    }

    let mut words: HashMap<&str, u64> = HashMap::new();
    let mut phrases: HashMap<&str, u64> = HashMap::new();
    for text in &texts {
        let spans = word_spans(text);
        for (i, &(s, e)) in spans.iter().enumerate() {
            *words.entry(&text[s..e]).or_default() += 1;
            for n in 2..=cfg.max_phrase_words {
                let Some(&(_, end)) = spans.get(i + n - 1) else { break };
                let gap_ok = spans[i..i + n]
                    .windows(2)
                    .all(|w| text[w[0].1..w[1].0].chars().all(char::is_whitespace));
                if !gap_ok {
                    break;
                }
                *phrases.entry(&text[s..end]).or_default() += 1;
            }
        }
    }

    let words = top_by_count(words, cfg.max_words, 1);
    let phrases = top_by_count(phrases, cfg.max_multiwords, cfg.min_multiword_count.max(1));
    let total: u64 = words.iter().chain(&phrases).map(|&(_, c)| c).sum();

    let mut vocab = Vocabulary::new("task");
    for (text, count) in words {
        vocab.insert(Token::word(text)?, count as f64 / total as f64)?;
    }
    for (text, count) in phrases {
        vocab.insert(Token::multiword(text)?, count as f64 / total as f64)?;
    }
    Ok((vocab, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::Granularity;

    fn cfg(max_words: usize, max_multiwords: usize, min: u64) -> LearnConfig {
        LearnConfig {
            max_words,
            max_multiwords,
            min_multiword_count: min,
            ..LearnConfig::default()
        }
    }

    #[test]
    fn default_threshold_drops_rare_phrases() {
        let (v, _) = learn_task_vocab(["the cat sat", "the cat ran"], &cfg(2, 1, 5)).unwrap();
        let texts: Vec<_> = v.texts().collect();
        assert_eq!(texts, ["cat", "the"]);
        assert_eq!(v.get("cat").unwrap().freq, 0.5);
    }

    #[test]
    fn lowered_threshold_mines_the_only_repeated_bigram() {
        let (v, _) = learn_task_vocab(["the cat sat", "the cat ran"], &cfg(2, 1, 2)).unwrap();
        let texts: Vec<_> = v.texts().collect();
        assert_eq!(texts, ["cat", "the", "the cat"]);
        assert_eq!(v.get("the cat").unwrap().granularity, Granularity::Multiword);
        // counts: cat 2, the 2, "the cat" 2
        assert!((v.get("the cat").unwrap().freq - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_token_corpus() {
        let (v, _) = learn_task_vocab(["a"], &cfg(1, 0, 5)).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v.get("a").unwrap().freq, 1.0);
    }

    #[test]
    fn ties_broken_lexicographically() {
        let (v, _) = learn_task_vocab(["zeta alpha mid"], &cfg(2, 0, 5)).unwrap();
        let texts: Vec<_> = v.texts().collect();
        assert_eq!(texts, ["alpha", "mid"]);
    }

    #[test]
    fn empty_and_blank_corpora() {
        let none: [&str; 0] = [];
        assert!(matches!(
            learn_task_vocab(none, &cfg(1, 1, 5)),
            Err(Error::EmptyTaskCorpus)
        ));
        assert!(matches!(
            learn_task_vocab(["  ", "\n"], &cfg(1, 1, 5)),
            Err(Error::EmptyTaskCorpus)
        ));
        let (_, stats) = learn_task_vocab(["  ", "x"], &cfg(1, 1, 5)).unwrap();
        assert_eq!(stats.blank_skipped, 1);
    }

    #[test]
    fn phrases_do_not_cross_punctuation() {
        let docs = vec!["new york, new york"; 5];
        let (v, _) = learn_task_vocab(&docs, &cfg(10, 10, 5)).unwrap();
        assert!(v.contains("new york"));
        assert!(!v.contains("york, new"));
        assert!(!v.contains("york new"));
    }

    #[test]
    fn deterministic() {
        let docs = ["a b c a b", "c a b d", "a b"];
        let a = learn_task_vocab(docs, &cfg(3, 3, 2)).unwrap().0;
        let b = learn_task_vocab(docs, &cfg(3, 3, 2)).unwrap().0;
        assert_eq!(a, b);
    }
}
