use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distribution::DEFAULT_ALPHA;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::vocab::{LearnConfig, MergeStrategy};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Independent selection per shard under a `k / num_shards` quota.
    #[default]
    PerShard,
    /// One selection over the whole pool; shards only affect bookkeeping.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub raw_corpus: Vec<PathBuf>,
    pub task_corpus: PathBuf,
    pub base_vocab: PathBuf,
    pub output_dir: PathBuf,

    pub strategy: MergeStrategy,
    pub target_vocab_size: usize,
    pub prune_steps: usize,
    pub max_words: usize,
    pub max_multiwords: usize,
    pub min_multiword_count: u64,

    pub num_buckets: usize,
    pub ngram_orders: Vec<usize>,
    pub alpha: f64,

    pub k: usize,
    pub num_shards: usize,
    pub sampling: SamplingMode,
    #[serde(deserialize_with = "seed_from_int_or_str")]
    pub seed: u64,

    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub strict: bool,
    pub emit_docs: bool,
    pub write_weights: bool,
}

/// TOML integers stop at `i64::MAX`, so seeds may also be given as strings.
fn seed_from_int_or_str<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<u64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Seed {
        Int(u64),
        Str(String),
    }
    match Seed::deserialize(d)? {
        Seed::Int(v) => Ok(v),
        Seed::Str(s) => s.trim().parse().map_err(serde::de::Error::custom),
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let learn = LearnConfig::default();
        let features = FeatureConfig::default();
        PipelineConfig {
            raw_corpus: Vec::new(),
            task_corpus: PathBuf::new(),
            base_vocab: PathBuf::new(),
            output_dir: PathBuf::from("out"),
            strategy: MergeStrategy::default(),
            target_vocab_size: 10_000,
            prune_steps: 10,
            max_words: learn.max_words,
            max_multiwords: learn.max_multiwords,
            min_multiword_count: learn.min_multiword_count,
            num_buckets: features.num_buckets,
            ngram_orders: features.ngram_orders,
            alpha: DEFAULT_ALPHA,
            k: 0,
            num_shards: 16,
            sampling: SamplingMode::default(),
            seed: 0,
            workers: 0,
            strict: false,
            emit_docs: false,
            write_weights: true,
        }
    }
}

impl PipelineConfig {
    /// Parse a TOML or JSON config, chosen by file extension (`.json` is
    /// JSON, anything else TOML).
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let cfg = if is_json {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        Ok(cfg)
    }

    pub fn feature_config(&self) -> Result<FeatureConfig> {
        FeatureConfig::new(self.num_buckets, self.ngram_orders.clone())
    }

    pub fn learn_config(&self) -> LearnConfig {
        LearnConfig {
            max_words: self.max_words,
            max_multiwords: self.max_multiwords,
            min_multiword_count: self.min_multiword_count,
            ..LearnConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.raw_corpus.is_empty() {
            return fail("raw_corpus must list at least one file".into());
        }
        if self.task_corpus.as_os_str().is_empty() {
            return fail("task_corpus is required".into());
        }
        if self.base_vocab.as_os_str().is_empty() {
            return fail("base_vocab is required".into());
        }
        if self.k == 0 {
            return fail("k must be at least 1".into());
        }
        if self.num_shards == 0 {
            return fail("num_shards must be at least 1".into());
        }
        if self.prune_steps == 0 {
            return fail("prune_steps must be at least 1".into());
        }
        if self.target_vocab_size == 0 {
            return fail("target_vocab_size must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return fail(format!("alpha must be > 0, got {}", self.alpha));
        }
        self.strategy.validate()?;
        self.feature_config()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::{GranularityMix, MergeKind};

    #[test]
    fn toml_with_defaults() {
        let cfg: PipelineConfig = toml::from_str(
            r#"
            raw_corpus = ["raw.jsonl"]
            task_corpus = "task.jsonl"
            base_vocab = "base.json"
            k = 100
            seed = "18446744073709551615"
            [strategy]
            kind = "multi_granular"
            mix = { subword = 0.6, word = 0.1, multiword = 0.3 }
            "#,
        )
        .unwrap();
        assert_eq!(cfg.num_shards, 16);
        assert_eq!(cfg.target_vocab_size, 10_000);
        assert_eq!(cfg.prune_steps, 10);
        assert_eq!(cfg.num_buckets, 10_000);
        assert_eq!(cfg.seed, u64::MAX);
        assert_eq!(cfg.strategy.mix, Some(GranularityMix::MULTIWORD_LEANING));
        cfg.validate().unwrap();
    }

    #[test]
    fn json_and_validation() {
        let cfg: PipelineConfig = serde_json::from_str(
            r#"{"raw_corpus":["r"],"task_corpus":"t","base_vocab":"b","k":0,
                "strategy":{"kind":"base_only"}}"#,
        )
        .unwrap();
        assert_eq!(cfg.strategy.kind, MergeKind::BaseOnly);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"bogus":1}"#).is_err());
        let cfg: PipelineConfig = serde_json::from_str(r#"{"seed":18446744073709551615}"#).unwrap();
        assert_eq!(cfg.seed, u64::MAX);
        let cfg: PipelineConfig = toml::from_str("seed = 42").unwrap();
        assert_eq!(cfg.seed, 42);
    }
}
