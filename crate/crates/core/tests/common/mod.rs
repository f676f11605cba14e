//! Synthetic corpora and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::fs;
use std::path::Path;

use mgsel::corpus::Document;
use mgsel::tokenizer::Tokenizer;
use mgsel::vocab::{vocab_utility, Token, Vocabulary};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Token `i` of the 50-token two-domain vocabulary.
pub fn domain_token(i: usize) -> String {
    format!("t{i:02}")
}

/// Vocabulary covering the two-domain corpus: the 50 tokens plus a space.
pub fn domain_vocab() -> Vocabulary {
    let mut tokens: Vec<(Token, f64)> = (0..50).map(|i| (Token::word(domain_token(i)).unwrap(), 1.0)).collect();
    tokens.push((Token::subword(" ").unwrap(), 1.0));
    let mut v = Vocabulary::from_tokens("domains", tokens).unwrap();
    v.normalize();
    v
}

/// A document of 20 to 60 tokens. Domain A puts 80% of its mass uniformly on
/// tokens 0..25, domain B on tokens 25..50.
pub fn domain_doc(rng: &mut ChaCha8Rng, domain_a: bool) -> String {
    let len = rng.random_range(20..=60);
    let mut words = Vec::with_capacity(len);
    for _ in 0..len {
        let heavy = rng.random_bool(0.8);
        let first_half = heavy == domain_a;
        let i = rng.random_range(0..25) + if first_half { 0 } else { 25 };
        words.push(domain_token(i));
    }
    words.join(" ")
}

/// `n_raw` raw documents, half from each domain in expectation, and
/// `n_target` domain-A task documents.
pub fn two_domain_corpus(seed: u64, n_raw: usize, n_target: usize) -> (Vec<Document>, Vec<Document>) {
    let mut rng = rng(seed);
    let raw = (0..n_raw)
        .map(|i| {
            let a = rng.random_bool(0.5);
            Document {
                id: format!("raw-{i}"),
                text: domain_doc(&mut rng, a),
            }
        })
        .collect();
    let target = (0..n_target)
        .map(|i| Document {
            id: format!("task-{i}"),
            text: domain_doc(&mut rng, true),
        })
        .collect();
    (raw, target)
}

const GENERIC: &[&str] = &[
    "the", "of", "and", "to", "in", "is", "was", "for", "that", "with", "as", "on", "by", "at", "from", "this", "have",
    "are", "were", "which", "people", "time", "year", "world", "city", "house", "music", "game", "water", "story",
    "market", "school", "family", "money", "travel", "river", "garden", "season", "friend", "morning", "light",
    "table", "window", "street", "country", "history", "number", "power", "group", "public",
];

const DOMAIN: &[&str] = &[
    "protein",
    "binding",
    "receptor",
    "membrane",
    "signal",
    "pathway",
    "expression",
    "gene",
    "tumor",
    "kinase",
    "enzyme",
    "inhibitor",
    "mutation",
    "sequence",
    "cellular",
    "tissue",
    "plasma",
    "clinical",
    "patient",
    "therapy",
    "dose",
    "response",
    "analysis",
    "sample",
    "cohort",
];

const PHRASES: &[&str] = &[
    "protein binding site",
    "signal transduction pathway",
    "gene expression",
    "cell membrane",
    "tumor suppressor gene",
    "kinase inhibitor",
    "clinical trial",
    "dose response curve",
    "plasma concentration",
    "amino acid sequence",
    "receptor tyrosine kinase",
    "immune response",
];

fn sentence(rng: &mut ChaCha8Rng, phrase_rate: f64, domain_rate: f64) -> String {
    let len = rng.random_range(6..=14);
    let mut units: Vec<&str> = Vec::with_capacity(len);
    for _ in 0..len {
        let u = if rng.random_bool(phrase_rate) {
            PHRASES.choose(rng).unwrap()
        } else if rng.random_bool(domain_rate) {
            DOMAIN.choose(rng).unwrap()
        } else {
            GENERIC.choose(rng).unwrap()
        };
        units.push(u);
    }
    let mut s = units.join(" ");
    s.push('.');
    s
}

fn paragraph(rng: &mut ChaCha8Rng, phrase_rate: f64, domain_rate: f64) -> String {
    let n = rng.random_range(2..=5);
    (0..n)
        .map(|_| sentence(rng, phrase_rate, domain_rate))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Task-like documents: domain prose with frequently repeated phrases.
pub fn phrase_task_corpus(seed: u64, n: usize) -> Vec<Document> {
    let mut rng = rng(seed);
    (0..n)
        .map(|i| Document {
            id: format!("task-{i}"),
            text: paragraph(&mut rng, 0.35, 0.6),
        })
        .collect()
}

/// Raw pool: a `task_share` fraction of task-like documents, the rest
/// generic prose with rare domain vocabulary.
pub fn phrase_raw_corpus(seed: u64, n: usize, task_share: f64) -> Vec<Document> {
    let mut rng = rng(seed);
    (0..n)
        .map(|i| {
            let text = if rng.random_bool(task_share) {
                paragraph(&mut rng, 0.35, 0.6)
            } else {
                paragraph(&mut rng, 0.02, 0.05)
            };
            Document {
                id: format!("raw-{i}"),
                text,
            }
        })
        .collect()
}

/// General-purpose subword vocabulary: every letter, space and punctuation,
/// plus the 2 and 3 character pieces of the generic word list.
pub fn generic_base_vocab() -> Vocabulary {
    let mut texts: Vec<String> = ('a'..='z').map(String::from).collect();
    texts.extend([" ", ".", ","].map(String::from));
    for w in GENERIC {
        let chars: Vec<char> = w.chars().collect();
        for n in 2..=3 {
            for win in chars.windows(n) {
                texts.push(win.iter().collect());
            }
        }
    }
    texts.sort();
    texts.dedup();
    let tokens = texts.iter().map(|t| (Token::subword(t).unwrap(), 1.0));
    let mut v = Vocabulary::from_tokens("generic", tokens).unwrap();
    v.normalize();
    v
}

pub fn write_jsonl(path: &Path, docs: &[Document]) {
    let mut out = String::new();
    for d in docs {
        out.push_str(&serde_json::json!({"id": d.id, "text": d.text}).to_string());
        out.push('\n');
    }
    fs::write(path, out).unwrap();
}

/// Remove `token` from `vocab`, hand its mass to the pieces the reduced
/// vocabulary splits it into (fallback pieces carry none), and renormalize.
pub fn remove_and_reattribute(vocab: &Vocabulary, token: &str) -> Vocabulary {
    let mass = vocab.get(token).unwrap().freq;
    let mut reduced = vocab.clone();
    reduced.remove(token);
    let pieces: Vec<String> = Tokenizer::new(&reduced)
        .tokenize("", token)
        .pieces()
        .filter(|p| !p.fallback)
        .map(|p| p.text.to_string())
        .collect();
    let mut rebuilt = Vocabulary::new(reduced.source());
    for (text, entry) in reduced.iter() {
        let extra = pieces.iter().filter(|p| p.as_str() == text).count() as f64 * mass;
        rebuilt
            .insert(Token::new(text, entry.granularity).unwrap(), entry.freq + extra)
            .unwrap();
    }
    rebuilt.normalize();
    rebuilt
}

/// Exhaustive single removal: `|ΔH_v|` for every removable token (length
/// above one character), in vocabulary order.
pub fn single_removal_scores(vocab: &Vocabulary) -> Vec<(String, f64)> {
    let h0 = vocab_utility(vocab);
    vocab
        .texts()
        .filter(|t| t.chars().count() > 1)
        .map(|t| {
            (
                t.to_string(),
                (vocab_utility(&remove_and_reattribute(vocab, t)) - h0).abs(),
            )
        })
        .collect()
}

/// Random vocabulary of `n` distinct tokens over a small alphabet, with every
/// single letter present and random positive frequencies.
pub fn random_vocab(rng: &mut ChaCha8Rng, n: usize, alphabet: &[char], max_len: usize) -> Vocabulary {
    let mut texts: Vec<String> = alphabet.iter().map(|c| c.to_string()).collect();
    while texts.len() < n {
        let len = rng.random_range(2..=max_len);
        let t: String = (0..len).map(|_| *alphabet.choose(rng).unwrap()).collect();
        if !texts.contains(&t) {
            texts.push(t);
        }
    }
    let tokens: Vec<(Token, f64)> = texts
        .iter()
        .map(|t| (Token::subword(t).unwrap(), rng.random_range(0.01..1.0)))
        .collect();
    let mut v = Vocabulary::from_tokens("random", tokens).unwrap();
    v.normalize();
    v
}
