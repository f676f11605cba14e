//! End-to-end selection: adapt the vocabulary, featurize both corpora,
//! estimate the two bucket distributions, weight and sample the raw pool
//! shard by shard, and write the artifacts plus a report.
//!
//! Output directory layout:
//!
//! ```text
//! vocab.json            adapted vocabulary
//! prune_trace.csv       only when the vocabulary was pruned
//! target.bkdt(.json)    smoothed task distribution + provenance
//! raw.bkdt(.json)       smoothed raw distribution + provenance
//! weights.csv           doc_id,shard_id,log_weight
//! selected_ids.txt      one id per line, shard order then score order
//! selected.jsonl        selected documents, when emit_docs is set
//! report.json
//! cache/                content-addressed vocabulary stage outputs
//! ```

mod config;
mod report;
mod shard;
mod stats;

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

pub use config::{PipelineConfig, SamplingMode};
pub use report::{ReportMetrics, SelectionReport};
pub use shard::{shard_of, shard_quotas};
pub use stats::pearson;

use crate::corpus::{ensure_readable, read_all, CorpusReader, Document};
use crate::distribution::{kl_divergence, kl_reduction, BucketCounts, BucketDistribution, DistributionMeta};
use crate::error::{Error, Result};
use crate::features::{featurize, FeatureConfig, FeatureVector};
use crate::sampler::{gumbel_topk, random_select, LogRatio, WeightedDoc};
use crate::tokenizer::{nsl, refit_frequencies, Tokenizer};
use crate::vocab::{
    inherit_subwords, learn_task_vocab, merge_vocabs, prune_vocab, trim_to_mix, vocab_utility, MergeKind, PruneTrace,
    Vocabulary,
};

const CHUNK: usize = 8192;

/// Build the task vocabulary and combine it with `base` under the
/// configured strategy.
///
/// The task vocabulary is the mined words and phrases plus the base subwords
/// the base tokenizer emits on the task corpus. Merged frequencies are refit
/// on the task corpus before a multi-granular vocabulary is pruned (or
/// trimmed to its fixed mix).
pub fn adapt_vocabulary(
    base: &Vocabulary,
    task_texts: &[&str],
    cfg: &PipelineConfig,
) -> Result<(Vocabulary, Option<PruneTrace>)> {
    let (mut task, _) = learn_task_vocab(task_texts, &cfg.learn_config())?;
    inherit_subwords(&mut task, base, task_texts);
    refit_frequencies(&mut task, task_texts);

    let mut merged = merge_vocabs(base, &task, &cfg.strategy)?;
    refit_frequencies(&mut merged, task_texts);
    if cfg.strategy.kind != MergeKind::MultiGranular {
        return Ok((merged, None));
    }
    match cfg.strategy.mix {
        Some(mix) => Ok((trim_to_mix(&merged, &mix, cfg.target_vocab_size)?, None)),
        None if merged.len() > cfg.target_vocab_size => {
            let (pruned, trace) = prune_vocab(&merged, cfg.target_vocab_size, cfg.prune_steps)?;
            Ok((pruned, Some(trace)))
        }
        None => Ok((merged, None)),
    }
}

struct Timer {
    timings: BTreeMap<String, f64>,
    start: Instant,
}

impl Timer {
    fn new() -> Self {
        Timer {
            timings: BTreeMap::new(),
            start: Instant::now(),
        }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.timings.insert(stage.to_string(), (now - self.start).as_secs_f64());
        self.start = now;
    }
}

fn cache_key(cfg: &PipelineConfig) -> Result<String> {
    let mut h = Sha256::new();
    for path in [&cfg.base_vocab, &cfg.task_corpus] {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    let params = serde_json::json!({
        "strategy": cfg.strategy,
        "target_vocab_size": cfg.target_vocab_size,
        "prune_steps": cfg.prune_steps,
        "max_words": cfg.max_words,
        "max_multiwords": cfg.max_multiwords,
        "min_multiword_count": cfg.min_multiword_count,
        "strict": cfg.strict,
        "version": env!("CARGO_PKG_VERSION"),
    });
    h.update(params.to_string().as_bytes());
    Ok(hex::encode(&h.finalize()[..12]))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn copy(from: &Path, to: &Path) -> Result<()> {
    fs::copy(from, to).map(|_| ()).map_err(|e| Error::io(from, e))
}

/// Vocabulary stage with a content-addressed cache under `output_dir/cache`.
fn vocab_stage(cfg: &PipelineConfig, task: &[Document]) -> Result<(Vocabulary, bool)> {
    let cache_dir = cfg.output_dir.join("cache");
    create_dir(&cache_dir)?;
    let key = cache_key(cfg)?;
    let cached_vocab = cache_dir.join(format!("vocab-{key}.json"));
    let cached_trace = cache_dir.join(format!("trace-{key}.csv"));
    let trace_out = cfg.output_dir.join("prune_trace.csv");
    let _ = fs::remove_file(&trace_out);

    if cached_vocab.exists() {
        let vocab = Vocabulary::load(&cached_vocab)?;
        if cached_trace.exists() {
            copy(&cached_trace, &trace_out)?;
        }
        log::info!("vocabulary stage: cache hit {key}");
        return Ok((vocab, true));
    }

    let base = Vocabulary::load(&cfg.base_vocab)?;
    let texts: Vec<&str> = task.iter().map(|d| d.text.as_str()).collect();
    let (vocab, trace) = adapt_vocabulary(&base, &texts, cfg)?;
    vocab.save(&cached_vocab)?;
    if let Some(trace) = trace {
        trace.save(&cached_trace)?;
        copy(&cached_trace, &trace_out)?;
    }
    Ok((vocab, false))
}

fn featurize_docs(tokenizer: &Tokenizer, features: &FeatureConfig, docs: &[Document]) -> Vec<FeatureVector> {
    docs.par_iter()
        .map(|d| featurize(&tokenizer.tokenize(&d.id, &d.text), features))
        .collect()
}

fn counts_of<'a>(vectors: impl Iterator<Item = &'a FeatureVector>, buckets: usize) -> Result<BucketCounts> {
    let mut counts = BucketCounts::new(buckets);
    for fv in vectors {
        counts.add(fv)?;
    }
    Ok(counts)
}

fn write_lines(path: &Path, lines: impl IntoIterator<Item = impl AsRef<str>>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for line in lines {
        writeln!(w, "{}", line.as_ref()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write `doc_id,shard_id,log_weight` rows.
pub fn write_weights(path: &Path, docs: &[WeightedDoc]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::input(path, e))?;
    w.write_record(["doc_id", "shard_id", "log_weight"])
        .map_err(|e| Error::input(path, e))?;
    for d in docs {
        w.write_record([d.doc_id.as_str(), &d.shard_id.to_string(), &d.log_weight.to_string()])
            .map_err(|e| Error::input(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Copy the selected raw documents, in selection order, to `path` as JSONL.
pub fn emit_documents(raw: &[PathBuf], strict: bool, selected: &[String], path: &Path) -> Result<()> {
    let wanted: HashMap<&str, usize> = selected.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut found: Vec<Option<String>> = vec![None; selected.len()];
    for doc in CorpusReader::new(raw, strict) {
        let doc = doc?;
        if let Some(&i) = wanted.get(doc.id.as_str()) {
            found[i] = Some(doc.text);
        }
    }
    let lines = selected.iter().zip(found).map(|(id, text)| {
        let text = text.ok_or_else(|| Error::Invariant(format!("selected document {id:?} vanished on re-read")))?;
        Ok(serde_json::json!({ "id": id, "text": text }).to_string())
    });
    let lines: Vec<String> = lines.collect::<Result<_>>()?;
    write_lines(path, lines)
}

/// Knobs for the in-memory selection core.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionParams {
    pub features: FeatureConfig,
    pub alpha: f64,
    pub k: usize,
    pub num_shards: usize,
    pub sampling: SamplingMode,
    pub seed: u64,
}

impl SelectionParams {
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self> {
        Ok(SelectionParams {
            features: cfg.feature_config()?,
            alpha: cfg.alpha,
            k: cfg.k,
            num_shards: cfg.num_shards,
            sampling: cfg.sampling,
            seed: cfg.seed,
        })
    }
}

/// Everything the selection core computes, before anything is written.
#[derive(Debug, Clone)]
pub struct SelectionOutcome {
    pub target: BucketDistribution,
    pub raw: BucketDistribution,
    pub target_docs: u64,
    pub weighted: Vec<WeightedDoc>,
    /// Shard order, then descending perturbed score within a shard.
    pub selected: Vec<String>,
    pub baseline: Vec<String>,
    pub shard_sizes: Vec<usize>,
    pub shard_selected: Vec<usize>,
    pub empty_feature_docs: usize,
    pub kl_target_selected: f64,
    pub kl_target_random: f64,
    pub kl_target_raw: f64,
    pub kl_reduction: f64,
    pub warnings: Vec<String>,
}

/// Output of [`sample_shards`].
#[derive(Debug, Clone, PartialEq)]
pub struct ShardSelection {
    /// Shard order, then descending perturbed score within a shard.
    pub selected: Vec<String>,
    /// Uniform draw under the same quotas, on an independent noise stream.
    pub baseline: Vec<String>,
    pub shard_sizes: Vec<usize>,
    pub shard_selected: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Select `k` of the weighted documents, either per shard under
/// [`shard_quotas`] or globally, plus a random baseline with the same quotas.
/// Every `shard_id` must be below `num_shards`.
pub fn sample_shards(
    weighted: &[WeightedDoc],
    k: usize,
    num_shards: usize,
    sampling: SamplingMode,
    seed: u64,
) -> Result<ShardSelection> {
    if k == 0 || num_shards == 0 {
        return Err(Error::Config("k and num_shards must be at least 1".into()));
    }
    if weighted.is_empty() {
        return Err(Error::DegenerateInput("no documents to select from"));
    }
    let mut warnings = Vec::new();
    let mut by_shard: Vec<Vec<WeightedDoc>> = vec![Vec::new(); num_shards];
    for d in weighted {
        let shard = by_shard
            .get_mut(d.shard_id as usize)
            .ok_or_else(|| Error::Invariant(format!("shard id {} out of range", d.shard_id)))?;
        shard.push(d.clone());
    }
    let shard_sizes: Vec<usize> = by_shard.iter().map(Vec::len).collect();
    let groups: Vec<(Vec<WeightedDoc>, usize)> = match sampling {
        SamplingMode::PerShard => {
            let (quotas, w) = shard_quotas(&shard_sizes, k);
            warnings.extend(w);
            by_shard.into_iter().zip(quotas).collect()
        }
        SamplingMode::Global => {
            if k > weighted.len() {
                warnings.push(format!(
                    "k = {k} exceeds the {} documents; selecting all",
                    weighted.len()
                ));
            }
            vec![(weighted.to_vec(), k.min(weighted.len()))]
        }
    };

    let mut selected: Vec<String> = Vec::with_capacity(k);
    let mut baseline: Vec<String> = Vec::with_capacity(k);
    for (docs, quota) in &groups {
        if *quota == 0 {
            continue;
        }
        selected.extend(gumbel_topk(docs, *quota, seed)?.selected);
        let ids: Vec<&str> = docs.iter().map(|d| d.doc_id.as_str()).collect();
        baseline.extend(random_select(&ids, *quota, seed)?.selected);
    }
    let shard_of_id: HashMap<&str, u32> = weighted.iter().map(|d| (d.doc_id.as_str(), d.shard_id)).collect();
    let mut shard_selected = vec![0usize; num_shards];
    for id in &selected {
        shard_selected[shard_of_id[id.as_str()] as usize] += 1;
    }
    Ok(ShardSelection {
        selected,
        baseline,
        shard_sizes,
        shard_selected,
        warnings,
    })
}

/// Featurize the task documents and the raw stream with `tokenizer`,
/// weight every raw document, and select `k` of them per shard quota,
/// together with a uniform random baseline drawn under the same quotas.
///
/// Raw documents are assigned to shards round-robin in stream order. Only
/// sparse feature vectors are kept in memory.
pub fn select_documents<I>(
    tokenizer: &Tokenizer,
    task_docs: &[Document],
    raw_docs: I,
    params: &SelectionParams,
) -> Result<SelectionOutcome>
where
    I: IntoIterator<Item = Result<Document>>,
{
    if params.k == 0 || params.num_shards == 0 {
        return Err(Error::Config("k and num_shards must be at least 1".into()));
    }
    let buckets = params.features.num_buckets;
    let mut warnings = Vec::new();

    let task_vectors = featurize_docs(tokenizer, &params.features, task_docs);
    let target_counts = counts_of(task_vectors.iter(), buckets)?;
    let target = BucketDistribution::from_counts(&target_counts, params.alpha)?;

    let mut raw_docs = raw_docs.into_iter();
    let mut raw: Vec<(FeatureVector, u32)> = Vec::new();
    let mut raw_counts = BucketCounts::new(buckets);
    loop {
        let chunk: Vec<Document> = raw_docs.by_ref().take(CHUNK).collect::<Result<_>>()?;
        if chunk.is_empty() {
            break;
        }
        for fv in featurize_docs(tokenizer, &params.features, &chunk) {
            raw_counts.add(&fv)?;
            let shard = shard_of(raw.len() as u64, params.num_shards);
            raw.push((fv, shard));
        }
    }
    if raw.is_empty() {
        return Err(Error::DegenerateInput("raw corpus has no documents"));
    }
    let raw_dist = BucketDistribution::from_counts(&raw_counts, params.alpha)?;

    let ratio = LogRatio::new(&target, &raw_dist)?;
    let weighted: Vec<WeightedDoc> = raw
        .par_iter()
        .map(|(fv, shard)| {
            Ok(WeightedDoc {
                doc_id: fv.doc_id.clone(),
                log_weight: ratio.log_weight(fv)?,
                shard_id: *shard,
            })
        })
        .collect::<Result<_>>()?;

    let ShardSelection {
        selected,
        baseline,
        shard_sizes,
        shard_selected,
        warnings: sample_warnings,
    } = sample_shards(&weighted, params.k, params.num_shards, params.sampling, params.seed)?;
    warnings.extend(sample_warnings);

    let index: HashMap<&str, &FeatureVector> = raw.iter().map(|(fv, _)| (fv.doc_id.as_str(), fv)).collect();
    let subset = |ids: &[String]| -> Result<BucketDistribution> {
        let counts = counts_of(ids.iter().map(|id| index[id.as_str()]), buckets)?;
        BucketDistribution::from_counts(&counts, params.alpha)
    };
    let selected_dist = subset(&selected)?;
    let baseline_dist = subset(&baseline)?;
    let kl_target_selected = kl_divergence(&target, &selected_dist)?;
    let kl_target_random = kl_divergence(&target, &baseline_dist)?;
    let reduction = kl_reduction(&target, &selected_dist, &baseline_dist)?;
    if (reduction - (kl_target_random - kl_target_selected)).abs() > 1e-12 {
        return Err(Error::Invariant("kl_reduction disagrees with its KL terms".into()));
    }

    Ok(SelectionOutcome {
        kl_target_raw: kl_divergence(&target, &raw_dist)?,
        target,
        raw: raw_dist,
        target_docs: target_counts.docs(),
        empty_feature_docs: raw.iter().filter(|(fv, _)| fv.total == 0).count(),
        weighted,
        selected,
        baseline,
        shard_sizes,
        shard_selected,
        kl_target_selected,
        kl_target_random,
        kl_reduction: reduction,
        warnings,
    })
}

/// Run the whole selection. Deterministic in (inputs, config, seed) except
/// for the timings; the worker count has no effect on any output.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<SelectionReport> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_inner(cfg))
}

fn run_inner(cfg: &PipelineConfig) -> Result<SelectionReport> {
    let mut timer = Timer::new();

    ensure_readable(&cfg.raw_corpus)?;
    ensure_readable(&[&cfg.task_corpus, &cfg.base_vocab])?;
    create_dir(&cfg.output_dir)?;
    let params = SelectionParams::from_config(cfg)?;

    let (task_docs, task_stats) = read_all(&[&cfg.task_corpus], cfg.strict)?;
    if task_docs.is_empty() {
        return Err(Error::EmptyTaskCorpus);
    }
    let (vocab, cache_hit) = vocab_stage(cfg, &task_docs)?;
    vocab.save(cfg.output_dir.join("vocab.json"))?;
    let tokenizer = Tokenizer::new(&vocab);
    let base_tokenizer = Tokenizer::new(&Vocabulary::load(&cfg.base_vocab)?);
    let (adapted_len, base_len): (Vec<usize>, Vec<usize>) = task_docs
        .par_iter()
        .map(|d| (tokenizer.count(&d.text), base_tokenizer.count(&d.text)))
        .unzip();
    let nsl_adapted = nsl(&adapted_len, &base_len)?;
    drop(base_tokenizer);
    timer.lap("vocab");

    let mut reader = CorpusReader::new(&cfg.raw_corpus, cfg.strict);
    let outcome = select_documents(&tokenizer, &task_docs, reader.by_ref(), &params).map_err(|e| match e {
        Error::DegenerateInput(msg) => Error::input(&cfg.raw_corpus[0], msg),
        e => e,
    })?;
    let raw_stats = reader.stats();
    timer.lap("select");

    let meta = |corpus: Vec<String>, docs: u64, dist: &BucketDistribution| DistributionMeta {
        corpus,
        doc_count: docs,
        support_total: dist.support_total(),
        num_buckets: params.features.num_buckets,
        alpha: cfg.alpha,
    };
    outcome.target.save(
        cfg.output_dir.join("target.bkdt"),
        &meta(
            vec![cfg.task_corpus.display().to_string()],
            outcome.target_docs,
            &outcome.target,
        ),
    )?;
    outcome.raw.save(
        cfg.output_dir.join("raw.bkdt"),
        &meta(
            cfg.raw_corpus.iter().map(|p| p.display().to_string()).collect(),
            outcome.weighted.len() as u64,
            &outcome.raw,
        ),
    )?;
    if cfg.write_weights {
        write_weights(&cfg.output_dir.join("weights.csv"), &outcome.weighted)?;
    }
    write_lines(&cfg.output_dir.join("selected_ids.txt"), &outcome.selected)?;
    if cfg.emit_docs {
        emit_documents(
            &cfg.raw_corpus,
            cfg.strict,
            &outcome.selected,
            &cfg.output_dir.join("selected.jsonl"),
        )?;
    }
    timer.lap("write");

    for w in &outcome.warnings {
        log::warn!("{w}");
    }
    let metrics = ReportMetrics {
        raw_docs: outcome.weighted.len(),
        task_docs: task_docs.len(),
        shard_doc_counts: outcome.shard_sizes,
        shard_selected_counts: outcome.shard_selected,
        k_requested: cfg.k,
        k_achieved: outcome.selected.len(),
        empty_feature_docs: outcome.empty_feature_docs,
        kl_target_selected: outcome.kl_target_selected,
        kl_target_random: outcome.kl_target_random,
        kl_target_raw: outcome.kl_target_raw,
        kl_reduction: outcome.kl_reduction,
        nsl_adapted_vs_base: nsl_adapted,
        vocab_size: vocab.len(),
        vocab_utility_nats: vocab_utility(&vocab),
        malformed_lines: raw_stats.malformed + task_stats.malformed,
        duplicate_ids: raw_stats.duplicate_ids + task_stats.duplicate_ids,
    };
    let report = SelectionReport {
        metrics,
        warnings: outcome.warnings,
        timings: timer.timings,
        vocab_cache_hit: cache_hit,
        config: cfg.clone(),
    };
    report.save(cfg.output_dir.join("report.json"))?;
    Ok(report)
}
