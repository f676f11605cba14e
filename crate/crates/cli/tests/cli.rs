use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TASK: &[&str] = &[
    "gene expression in the cell membrane.",
    "the kinase inhibitor changed gene expression.",
    "clinical trial of a kinase inhibitor.",
    "gene expression and the clinical trial.",
    "a kinase inhibitor in the cell membrane.",
    "cell membrane gene expression study.",
];

const GENERIC: &[&str] = &[
    "the river ran past the old house.",
    "music in the city at night.",
    "a story about the family garden.",
    "the market opened in the morning.",
];

fn mgsel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mgsel")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = mgsel(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn jsonl(path: &Path, prefix: &str, texts: impl Iterator<Item = String>) {
    let body: String = texts
        .enumerate()
        .map(|(i, t)| serde_json::json!({"id": format!("{prefix}{i}"), "text": t}).to_string() + "\n")
        .collect();
    fs::write(path, body).unwrap();
}

fn setup(root: &Path) {
    jsonl(
        &root.join("task.jsonl"),
        "t",
        (0..60).map(|i| TASK[i % TASK.len()].to_string()),
    );
    jsonl(
        &root.join("raw.jsonl"),
        "r",
        (0..400).map(|i| {
            if i % 4 == 0 {
                TASK[i % TASK.len()].to_string()
            } else {
                GENERIC[i % GENERIC.len()].to_string()
            }
        }),
    );
    let mut pieces: Vec<String> = ('a'..='z').map(String::from).collect();
    pieces.extend([" ", ".", "th", "he", "in", "er", "an", "re", "on", "at", "the", "ing"].map(String::from));
    let tokens: Vec<serde_json::Value> = pieces
        .iter()
        .map(|t| serde_json::json!({"text": t, "granularity": "subword", "freq": 1.0 / pieces.len() as f64}))
        .collect();
    let vocab = serde_json::json!({"tokens": tokens, "meta": {"source": "base", "size": pieces.len()}});
    fs::write(root.join("base.json"), vocab.to_string()).unwrap();
}

fn p(root: &Path, name: &str) -> String {
    root.join(name).to_str().unwrap().to_string()
}

#[test]
fn staged_commands() {
    let dir = tempfile::tempdir().unwrap();
    let r = dir.path();
    setup(r);
    ok(&[
        "learn-vocab",
        "--task",
        &p(r, "task.jsonl"),
        "--out",
        &p(r, "task_vocab.json"),
        "--min-multiword-count",
        "3",
    ]);
    let learned: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(r.join("task_vocab.json")).unwrap()).unwrap();
    let texts: Vec<&str> = learned["tokens"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["text"].as_str().unwrap())
        .collect();
    assert!(texts.contains(&"gene expression"));

    ok(&[
        "merge-vocab",
        "--base",
        &p(r, "base.json"),
        "--task",
        &p(r, "task_vocab.json"),
        "--strategy",
        "merge",
        "--docs",
        &p(r, "task.jsonl"),
        "--out",
        &p(r, "merged.json"),
    ]);
    ok(&[
        "prune-vocab",
        "--vocab",
        &p(r, "merged.json"),
        "--target-size",
        "45",
        "--steps",
        "3",
        "--out",
        &p(r, "pruned.json"),
        "--trace",
        &p(r, "trace.csv"),
    ]);
    let trace = fs::read_to_string(r.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 5);
    assert!(trace.lines().last().unwrap().starts_with("3,45,"));

    for corpus in ["task", "raw"] {
        ok(&[
            "featurize",
            "--vocab",
            &p(r, "pruned.json"),
            "--docs",
            &p(r, &format!("{corpus}.jsonl")),
            "--out",
            &p(r, &format!("{corpus}.feat")),
            "--buckets",
            "500",
        ]);
        ok(&[
            "estimate",
            "--features",
            &p(r, &format!("{corpus}.feat")),
            "--buckets",
            "500",
            "--out",
            &p(r, &format!("{corpus}.bkdt")),
        ]);
    }
    assert_eq!(fs::read_to_string(r.join("raw.feat")).unwrap().lines().count(), 400);

    ok(&[
        "select",
        "--target",
        &p(r, "task.bkdt"),
        "--raw",
        &p(r, "raw.bkdt"),
        "--features",
        &p(r, "raw.feat"),
        "--k",
        "40",
        "--seed",
        "18446744073709551615",
        "--num-shards",
        "4",
        "--out",
        &p(r, "ids.txt"),
        "--weights",
        &p(r, "weights.csv"),
        "--emit-docs",
        "--docs",
        &p(r, "raw.jsonl"),
    ]);
    let ids = fs::read_to_string(r.join("ids.txt")).unwrap();
    assert_eq!(ids.lines().count(), 40);
    // task-like raw documents are every fourth one, so all of them sit in
    // shard 0 and fill exactly its quota
    let task_like = |ids: &str| {
        ids.lines()
            .filter(|id| id[1..].parse::<usize>().unwrap() % 4 == 0)
            .count()
    };
    assert_eq!(task_like(&ids), 10);
    assert_eq!(fs::read_to_string(r.join("ids.jsonl")).unwrap().lines().count(), 40);
    let weights = fs::read_to_string(r.join("weights.csv")).unwrap();
    assert_eq!(weights.lines().next(), Some("doc_id,shard_id,log_weight"));
    assert_eq!(weights.lines().count(), 401);

    ok(&[
        "select",
        "--target",
        &p(r, "task.bkdt"),
        "--raw",
        &p(r, "raw.bkdt"),
        "--features",
        &p(r, "raw.feat"),
        "--k",
        "40",
        "--sampling",
        "global",
        "--out",
        &p(r, "global.txt"),
    ]);
    assert_eq!(task_like(&fs::read_to_string(r.join("global.txt")).unwrap()), 40);

    let nsl = ok(&[
        "nsl",
        "--candidate-vocab",
        &p(r, "merged.json"),
        "--reference-vocab",
        &p(r, "base.json"),
        "--docs",
        &p(r, "task.jsonl"),
        "--per-doc",
        &p(r, "per_doc.csv"),
    ]);
    let value: f64 = nsl.trim().parse().unwrap();
    assert!(value > 0.0 && value < 1.0, "{value}");
    assert_eq!(fs::read_to_string(r.join("per_doc.csv")).unwrap().lines().count(), 61);
    let same = ok(&[
        "nsl",
        "--candidate-vocab",
        &p(r, "base.json"),
        "--reference-vocab",
        &p(r, "base.json"),
        "--docs",
        &p(r, "task.jsonl"),
    ]);
    assert_eq!(same.trim(), "1");
}

#[test]
fn run_is_deterministic_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let r = dir.path();
    setup(r);
    let config = format!(
        "raw_corpus = [{:?}]\ntask_corpus = {:?}\nbase_vocab = {:?}\nk = 50\nnum_shards = 4\n\
         target_vocab_size = 60\nmin_multiword_count = 3\nseed = \"12345678901234567890\"\n",
        p(r, "raw.jsonl"),
        p(r, "task.jsonl"),
        p(r, "base.json"),
    );
    fs::write(r.join("config.toml"), config).unwrap();
    let mut outputs = Vec::new();
    for (name, workers) in [("a", "1"), ("b", "1"), ("c", "8")] {
        let summary = ok(&[
            "run",
            "--config",
            &p(r, "config.toml"),
            "--output-dir",
            &p(r, name),
            "--workers",
            workers,
        ]);
        assert!(summary.contains("selected 50 of 400"), "{summary}");
        let report: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(r.join(name).join("report.json")).unwrap()).unwrap();
        assert_eq!(report["config"]["seed"].as_u64(), Some(12345678901234567890));
        outputs.push((
            fs::read(r.join(name).join("selected_ids.txt")).unwrap(),
            report["metrics"].clone(),
        ));
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));

    let metrics = ok(&["report", &p(r, "a"), "--json"]);
    let metrics: serde_json::Value = serde_json::from_str(&metrics).unwrap();
    assert_eq!(metrics, outputs[0].1);
    assert!(ok(&["report", &p(r, "a/report.json")]).contains("KL reduction"));

    let other = ok(&[
        "run",
        "--config",
        &p(r, "config.toml"),
        "--output-dir",
        &p(r, "d"),
        "--seed",
        "7",
    ]);
    assert!(other.contains("selected 50"));
    assert_ne!(fs::read(r.join("d/selected_ids.txt")).unwrap(), outputs[0].0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let r = dir.path();
    setup(r);
    assert_eq!(mgsel(&["--help"]).status.code(), Some(0));
    assert_eq!(mgsel(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(
        mgsel(&["run", "--config", &p(r, "missing.toml")]).status.code(),
        Some(1)
    );
    fs::write(r.join("bad.toml"), "k = 10\nbogus = true\n").unwrap();
    assert_eq!(mgsel(&["run", "--config", &p(r, "bad.toml")]).status.code(), Some(1));
    let missing_input = mgsel(&[
        "run",
        "--raw",
        &p(r, "absent.jsonl"),
        "--task",
        &p(r, "task.jsonl"),
        "--base-vocab",
        &p(r, "base.json"),
        "--k",
        "5",
        "--output-dir",
        &p(r, "out"),
    ]);
    assert_eq!(missing_input.status.code(), Some(2));
    assert!(!r.join("out").exists());
    fs::write(r.join("broken.jsonl"), "{oops\n").unwrap();
    let strict = mgsel(&[
        "learn-vocab",
        "--task",
        &p(r, "broken.jsonl"),
        "--out",
        &p(r, "v.json"),
        "--strict",
    ]);
    assert_eq!(strict.status.code(), Some(2));
    let too_small = mgsel(&[
        "prune-vocab",
        "--vocab",
        &p(r, "base.json"),
        "--target-size",
        "3",
        "--out",
        &p(r, "x.json"),
    ]);
    assert_eq!(too_small.status.code(), Some(1));
}
