use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineConfig;
use crate::error::{Error, Result};

/// Numbers fully determined by the inputs, config and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetrics {
    pub raw_docs: usize,
    pub task_docs: usize,
    pub shard_doc_counts: Vec<usize>,
    pub shard_selected_counts: Vec<usize>,
    pub k_requested: usize,
    pub k_achieved: usize,
    pub empty_feature_docs: usize,
    pub kl_target_selected: f64,
    pub kl_target_random: f64,
    pub kl_target_raw: f64,
    /// `kl_target_random - kl_target_selected`.
    pub kl_reduction: f64,
    /// Adapted vs base tokenizer, on the task corpus.
    pub nsl_adapted_vs_base: f64,
    pub vocab_size: usize,
    pub vocab_utility_nats: f64,
    pub malformed_lines: u64,
    pub duplicate_ids: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub metrics: ReportMetrics,
    pub warnings: Vec<String>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
    pub vocab_cache_hit: bool,
    pub config: PipelineConfig,
}

impl SelectionReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::input(path, e))
    }

    /// Human-readable summary.
    pub fn summary(&self) -> String {
        let m = &self.metrics;
        let mut out = format!(
            "selected {} of {} raw documents (k = {}) across {} shards\n\
             KL(target||selected) = {:.6} nats\n\
             KL(target||random)   = {:.6} nats\n\
             KL(target||raw)      = {:.6} nats\n\
             KL reduction         = {:.6} nats\n\
             NSL adapted/base     = {:.4}\n\
             vocabulary           = {} tokens, utility {:.6} nats/char\n",
            m.k_achieved,
            m.raw_docs,
            m.k_requested,
            m.shard_doc_counts.len(),
            m.kl_target_selected,
            m.kl_target_random,
            m.kl_target_raw,
            m.kl_reduction,
            m.nsl_adapted_vs_base,
            m.vocab_size,
            m.vocab_utility_nats,
        );
        for (stage, secs) in &self.timings {
            out.push_str(&format!("  {stage:<10} {secs:>9.3}s\n"));
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}
