//! `mgsel`: command-line front end for target-aware corpus selection.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use mgsel::corpus::{read_all, CorpusReader};
use mgsel::distribution::{BucketCounts, BucketDistribution, DistributionMeta, DEFAULT_ALPHA};
use mgsel::features::{featurize, FeatureConfig, FeatureVector};
use mgsel::pipeline::{
    emit_documents, run_pipeline, sample_shards, shard_of, write_weights, PipelineConfig, SamplingMode, SelectionReport,
};
use mgsel::sampler::{LogRatio, WeightedDoc};
use mgsel::tokenizer::{nsl, refit_frequencies, Tokenizer};
use mgsel::vocab::{
    inherit_subwords, learn_task_vocab, merge_vocabs, prune_vocab, vocab_utility, GranularityMix, LearnConfig,
    MergeKind, MergeStrategy, Vocabulary,
};
use mgsel::Error;

#[derive(Parser)]
#[command(name = "mgsel", version, about = "Select raw documents that match a task corpus")]
struct Cli {
    /// Log verbosity; repeat for more.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mine word and phrase tokens from a task corpus.
    LearnVocab(LearnVocabArgs),
    /// Combine a base and a task vocabulary under a merge strategy.
    MergeVocab(MergeVocabArgs),
    /// Greedily shrink a vocabulary while preserving its utility.
    PruneVocab(PruneVocabArgs),
    /// Tokenize documents and write hashed n-gram count vectors.
    Featurize(FeaturizeArgs),
    /// Estimate a smoothed bucket distribution from feature vectors.
    Estimate(EstimateArgs),
    /// Weight raw feature vectors against a target and sample k of them.
    Select(SelectArgs),
    /// Run the full pipeline from a config file.
    Run(RunArgs),
    /// Normalized sequence length of one tokenizer against another.
    Nsl(NslArgs),
    /// Print the summary of a report.json.
    Report(ReportArgs),
}

#[derive(Args)]
struct LearnVocabArgs {
    /// Task corpus JSONL files.
    #[arg(long, required = true, num_args = 1..)]
    task: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    max_words: Option<usize>,
    #[arg(long)]
    max_multiwords: Option<usize>,
    #[arg(long)]
    min_multiword_count: Option<u64>,
    #[arg(long)]
    strict: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    MultiGranular,
    Merge,
    TargetOnly,
    BaseOnly,
    MultiwordOnly,
}

impl From<KindArg> for MergeKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::MultiGranular => MergeKind::MultiGranular,
            KindArg::Merge => MergeKind::MergeUnion,
            KindArg::TargetOnly => MergeKind::TargetOnly,
            KindArg::BaseOnly => MergeKind::BaseOnly,
            KindArg::MultiwordOnly => MergeKind::MultiwordOnly,
        }
    }
}

#[derive(Args)]
struct MergeVocabArgs {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    task: PathBuf,
    #[arg(long, value_enum, default_value = "multi-granular")]
    strategy: KindArg,
    /// Fixed subword,word,multiword ratio for multi-granular merges.
    #[arg(long, value_parser = parse_mix)]
    mix: Option<GranularityMix>,
    /// Task documents: inherit the base subwords they use and refit
    /// frequencies on them.
    #[arg(long, num_args = 1..)]
    docs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PruneVocabArgs {
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    target_size: usize,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    #[arg(long)]
    out: PathBuf,
    /// Write the step,size,utility_nats trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct FeatureArgs {
    /// Number of hash buckets.
    #[arg(long, default_value_t = 10_000)]
    buckets: usize,
    /// Comma-separated n-gram orders.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    orders: Vec<usize>,
}

impl FeatureArgs {
    fn config(&self) -> mgsel::Result<FeatureConfig> {
        FeatureConfig::new(self.buckets, self.orders.clone())
    }
}

#[derive(Args)]
struct FeaturizeArgs {
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    docs: Vec<PathBuf>,
    /// One `doc_id<TAB>total<TAB>bucket:count,...` line per document.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    features: FeatureArgs,
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct EstimateArgs {
    /// Feature file written by `featurize`.
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    buckets: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplingArg {
    PerShard,
    Global,
}

impl From<SamplingArg> for SamplingMode {
    fn from(s: SamplingArg) -> Self {
        match s {
            SamplingArg::PerShard => SamplingMode::PerShard,
            SamplingArg::Global => SamplingMode::Global,
        }
    }
}

#[derive(Args)]
struct SelectArgs {
    /// Target distribution (.bkdt).
    #[arg(long)]
    target: PathBuf,
    /// Raw distribution (.bkdt).
    #[arg(long)]
    raw: PathBuf,
    /// Raw feature file; shards are assigned round-robin in file order.
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    num_shards: usize,
    #[arg(long, value_enum, default_value = "per-shard")]
    sampling: SamplingArg,
    /// Selected ids, one per line.
    #[arg(long)]
    out: PathBuf,
    /// Also write `doc_id,shard_id,log_weight` rows here.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Copy the selected documents from --docs to the --out path with a
    /// `.jsonl` extension.
    #[arg(long, requires = "docs")]
    emit_docs: bool,
    #[arg(long, num_args = 1..)]
    docs: Vec<PathBuf>,
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct RunArgs {
    /// TOML or JSON config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, num_args = 1..)]
    raw: Vec<PathBuf>,
    #[arg(long)]
    task: Option<PathBuf>,
    #[arg(long)]
    base_vocab: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    strategy: Option<KindArg>,
    #[arg(long, value_parser = parse_mix)]
    mix: Option<GranularityMix>,
    #[arg(long)]
    target_vocab_size: Option<usize>,
    #[arg(long)]
    prune_steps: Option<usize>,
    #[arg(long)]
    buckets: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    orders: Option<Vec<usize>>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    num_shards: Option<usize>,
    #[arg(long, value_enum)]
    sampling: Option<SamplingArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    emit_docs: bool,
    #[arg(long)]
    no_weights: bool,
}

impl RunArgs {
    fn into_config(self) -> anyhow::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_file(path)?,
            None => PipelineConfig::default(),
        };
        if !self.raw.is_empty() {
            cfg.raw_corpus = self.raw;
        }
        macro_rules! set {
            ($($field:ident <- $value:expr),* $(,)?) => {
                $(if let Some(v) = $value { cfg.$field = v.into(); })*
            };
        }
        set!(
            task_corpus <- self.task,
            base_vocab <- self.base_vocab,
            output_dir <- self.output_dir,
            target_vocab_size <- self.target_vocab_size,
            prune_steps <- self.prune_steps,
            num_buckets <- self.buckets,
            ngram_orders <- self.orders,
            alpha <- self.alpha,
            k <- self.k,
            num_shards <- self.num_shards,
            sampling <- self.sampling,
            seed <- self.seed,
            workers <- self.workers,
        );
        if let Some(kind) = self.strategy {
            cfg.strategy.kind = kind.into();
        }
        if self.mix.is_some() {
            cfg.strategy.mix = self.mix;
        }
        cfg.strict |= self.strict;
        cfg.emit_docs |= self.emit_docs;
        cfg.write_weights &= !self.no_weights;
        Ok(cfg)
    }
}

#[derive(Args)]
struct NslArgs {
    #[arg(long)]
    candidate_vocab: PathBuf,
    #[arg(long)]
    reference_vocab: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    docs: Vec<PathBuf>,
    /// Write `doc_id,candidate_tokens,reference_tokens` rows here.
    #[arg(long)]
    per_doc: Option<PathBuf>,
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// A report.json or the output directory holding one.
    path: PathBuf,
    /// Print the metrics as JSON instead of the summary.
    #[arg(long)]
    json: bool,
}

fn parse_mix(s: &str) -> Result<GranularityMix, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let [subword, word, multiword] = parts[..] else {
        return Err("expected three comma-separated ratios".into());
    };
    let mix = GranularityMix {
        subword,
        word,
        multiword,
    };
    mix.validate().map_err(|e| e.to_string())?;
    Ok(mix)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(BufWriter::new(file))
}

fn read_feature_file(path: &Path, buckets: usize) -> anyhow::Result<Vec<FeatureVector>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let fv =
            FeatureVector::parse_dump_line(&line, buckets).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        out.push(fv);
    }
    Ok(out)
}

fn learn_vocab(a: LearnVocabArgs) -> anyhow::Result<()> {
    let (docs, _) = read_all(&a.task, a.strict)?;
    let defaults = LearnConfig::default();
    let cfg = LearnConfig {
        max_words: a.max_words.unwrap_or(defaults.max_words),
        max_multiwords: a.max_multiwords.unwrap_or(defaults.max_multiwords),
        min_multiword_count: a.min_multiword_count.unwrap_or(defaults.min_multiword_count),
        ..defaults
    };
    let texts: Vec<&str> = docs.iter().map(|d| d.text.as_str()).collect();
    let (vocab, stats) = learn_task_vocab(&texts, &cfg)?;
    vocab.save(&a.out)?;
    eprintln!(
        "learned {} tokens from {} documents ({} blank)",
        vocab.len(),
        stats.documents,
        stats.blank_skipped
    );
    Ok(())
}

fn merge_vocab(a: MergeVocabArgs) -> anyhow::Result<()> {
    let base = Vocabulary::load(&a.base)?;
    let mut task = Vocabulary::load(&a.task)?;
    let docs = if a.docs.is_empty() {
        Vec::new()
    } else {
        read_all(&a.docs, false)?.0
    };
    let texts: Vec<&str> = docs.iter().map(|d| d.text.as_str()).collect();
    if !texts.is_empty() {
        inherit_subwords(&mut task, &base, &texts);
        refit_frequencies(&mut task, &texts);
    }
    let strategy = MergeStrategy {
        kind: a.strategy.into(),
        mix: a.mix,
    };
    strategy.validate()?;
    let mut merged = merge_vocabs(&base, &task, &strategy)?;
    if !texts.is_empty() {
        refit_frequencies(&mut merged, &texts);
    }
    merged.save(&a.out)?;
    eprintln!("merged vocabulary: {} tokens ({})", merged.len(), strategy.kind);
    Ok(())
}

fn prune(a: PruneVocabArgs) -> anyhow::Result<()> {
    let vocab = Vocabulary::load(&a.vocab)?;
    let (pruned, trace) = prune_vocab(&vocab, a.target_size, a.steps)?;
    pruned.save(&a.out)?;
    if let Some(path) = &a.trace {
        trace.save(path)?;
    }
    eprintln!(
        "pruned {} -> {} tokens, utility {:.6} nats/char",
        vocab.len(),
        pruned.len(),
        vocab_utility(&pruned)
    );
    Ok(())
}

fn featurize_cmd(a: FeaturizeArgs) -> anyhow::Result<()> {
    let cfg = a.features.config()?;
    let tokenizer = Tokenizer::new(&Vocabulary::load(&a.vocab)?);
    let mut out = create(&a.out)?;
    let mut reader = CorpusReader::new(&a.docs, a.strict);
    loop {
        let chunk: Vec<_> = reader.by_ref().take(8192).collect::<mgsel::Result<_>>()?;
        if chunk.is_empty() {
            break;
        }
        let lines: Vec<String> = chunk
            .par_iter()
            .map(|d| featurize(&tokenizer.tokenize(&d.id, &d.text), &cfg).dump_line())
            .collect();
        for line in lines {
            writeln!(out, "{line}").map_err(|e| Error::io(&a.out, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(&a.out, e))?;
    let stats = reader.stats();
    eprintln!(
        "featurized {} documents ({} malformed lines)",
        stats.documents, stats.malformed
    );
    Ok(())
}

fn estimate(a: EstimateArgs) -> anyhow::Result<()> {
    let vectors = read_feature_file(&a.features, a.buckets)?;
    let mut counts = BucketCounts::new(a.buckets);
    for fv in &vectors {
        counts.add(fv)?;
    }
    let dist = BucketDistribution::from_counts(&counts, a.alpha)?;
    let meta = DistributionMeta {
        corpus: vec![a.features.display().to_string()],
        doc_count: counts.docs(),
        support_total: dist.support_total(),
        num_buckets: a.buckets,
        alpha: a.alpha,
    };
    dist.save(&a.out, &meta)?;
    eprintln!("estimated from {} documents, {} n-grams", counts.docs(), counts.total());
    Ok(())
}

fn select(a: SelectArgs) -> anyhow::Result<()> {
    let (target, _) = BucketDistribution::load(&a.target)?;
    let (raw, _) = BucketDistribution::load(&a.raw)?;
    let ratio = LogRatio::new(&target, &raw)?;
    let vectors = read_feature_file(&a.features, raw.num_buckets())?;
    let weighted: Vec<WeightedDoc> = vectors
        .par_iter()
        .enumerate()
        .map(|(i, fv)| {
            Ok(WeightedDoc {
                doc_id: fv.doc_id.clone(),
                log_weight: ratio.log_weight(fv)?,
                shard_id: shard_of(i as u64, a.num_shards.max(1)),
            })
        })
        .collect::<mgsel::Result<_>>()?;
    let selection = sample_shards(&weighted, a.k, a.num_shards, a.sampling.into(), a.seed)?;
    for w in &selection.warnings {
        log::warn!("{w}");
    }
    let mut out = create(&a.out)?;
    for id in &selection.selected {
        writeln!(out, "{id}").map_err(|e| Error::io(&a.out, e))?;
    }
    out.flush().map_err(|e| Error::io(&a.out, e))?;
    if let Some(path) = &a.weights {
        write_weights(path, &weighted)?;
    }
    if a.emit_docs {
        emit_documents(&a.docs, a.strict, &selection.selected, &a.out.with_extension("jsonl"))?;
    }
    eprintln!("selected {} of {} documents", selection.selected.len(), weighted.len());
    Ok(())
}

fn run(a: RunArgs) -> anyhow::Result<()> {
    let cfg = a.into_config()?;
    let report = run_pipeline(&cfg)?;
    print!("{}", report.summary());
    Ok(())
}

fn nsl_cmd(a: NslArgs) -> anyhow::Result<()> {
    let candidate = Tokenizer::new(&Vocabulary::load(&a.candidate_vocab)?);
    let reference = Tokenizer::new(&Vocabulary::load(&a.reference_vocab)?);
    let (docs, _) = read_all(&a.docs, a.strict)?;
    let (cand, refr): (Vec<usize>, Vec<usize>) = docs
        .par_iter()
        .map(|d| (candidate.count(&d.text), reference.count(&d.text)))
        .unzip();
    let value = nsl(&cand, &refr)?;
    if let Some(path) = &a.per_doc {
        let mut w = csv::Writer::from_writer(create(path)?);
        w.write_record(["doc_id", "candidate_tokens", "reference_tokens"])?;
        for ((d, c), r) in docs.iter().zip(&cand).zip(&refr) {
            w.write_record([d.id.as_str(), &c.to_string(), &r.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    println!("{value}");
    Ok(())
}

fn report(a: ReportArgs) -> anyhow::Result<()> {
    let path = if a.path.is_dir() {
        a.path.join("report.json")
    } else {
        a.path
    };
    let report = SelectionReport::load(&path)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report.metrics)?);
    } else {
        print!("{}", report.summary());
    }
    Ok(())
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::LearnVocab(a) => learn_vocab(a),
        Command::MergeVocab(a) => merge_vocab(a),
        Command::PruneVocab(a) => prune(a),
        Command::Featurize(a) => featurize_cmd(a),
        Command::Estimate(a) => estimate(a),
        Command::Select(a) => {
            if a.num_shards == 0 {
                bail!(Error::Config("num_shards must be at least 1".into()));
            }
            select(a)
        }
        Command::Run(a) => run(a),
        Command::Nsl(a) => nsl_cmd(a),
        Command::Report(a) => report(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<Error>().map_or(2, Error::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
