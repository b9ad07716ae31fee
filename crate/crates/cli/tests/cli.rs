//! Drives the `scenecog` binary against the core crate's sealed fixtures.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").canonicalize().unwrap()
}

/// The fixture config with every path made absolute and the work directory
/// moved under `dir`.
fn write_config(dir: &Path, cache: &Path) -> PathBuf {
    let fx = fixtures();
    let text = std::fs::read_to_string(fx.join("run.toml")).unwrap();
    let abs = |p: &Path| p.display().to_string().replace('\\', "/");
    let text = text
        .replace("work_dir = \"work\"", &format!("work_dir = \"{}\"", abs(&dir.join("work"))))
        .replace("cache_dir = \"cache\"", &format!("cache_dir = \"{}\"", abs(cache)))
        .replace("archive = \"archive\"", &format!("archive = \"{}\"", abs(&fx.join("archive"))))
        .replace("\"completions/", &format!("\"{}/", abs(&fx.join("completions"))));
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn scenecog(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scenecog")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = scenecog(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_run_then_file_commands() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &fixtures().join("cache"));
    let work = dir.path().join("work");

    let out = ok(&["run", "--config", s(&config), "--stages", "all"]);
    assert!(out.contains("ran report"));
    assert!(work.join("reports/report.md").is_file());
    let again = ok(&["run", "--config", s(&config), "--resume"]);
    assert!(again.contains("skipped generate") && !again.contains("ran "));

    let pairs = dir.path().join("sft.jsonl");
    let out = ok(&["prep", "sft", "--in", s(&work.join("descriptions.jsonl")), "--out", s(&pairs)]);
    assert!(out.starts_with("100 pairs"));
    assert_eq!(std::fs::read(&pairs).unwrap(), std::fs::read(work.join("sft.jsonl")).unwrap());
    let split = dir.path().join("split.json");
    ok(&["prep", "split", "--questions", s(&work.join("questions.jsonl")), "--seed", "42", "--out", s(&split)]);
    assert_eq!(std::fs::read(&split).unwrap(), std::fs::read(work.join("split.json")).unwrap());

    let completions = fixtures().join("completions");
    let gold = work.join("questions.jsonl");
    let base = dir.path().join("base.json");
    let adapted = dir.path().join("adapted.json");
    for (file, out) in [("understanding.jsonl", &base), ("adapted.jsonl", &adapted)] {
        ok(&[
            "eval", "outputs", "--completions", s(&completions.join(file)), "--gold", s(&gold),
            "--set", "understanding", "--epoch", "5", "--runs", "5", "--out", s(out),
        ]);
    }
    let cells = ok(&["eval", "delta", "--baseline", s(&base), "--adapted", s(&adapted)]);
    assert_eq!(cells.trim().split(" | ").count(), 6);

    let trend_dir = dir.path().join("trend");
    std::fs::create_dir(&trend_dir).unwrap();
    std::fs::copy(work.join("eval/reports.json"), trend_dir.join("reports.json")).unwrap();
    ok(&["eval", "trend", "--reports", s(&trend_dir)]);
    let trend = std::fs::read_to_string(trend_dir.join("trend.csv")).unwrap();
    assert_eq!(trend.lines().count(), 6);

    let emitted = dir.path().join("emitted");
    let files = ok(&["report", "emit", "--config", s(&config), "--format", "csv", "--out", s(&emitted)]);
    assert!(files.contains("metrics.csv"));
    assert_eq!(
        std::fs::read(emitted.join("metrics.csv")).unwrap(),
        std::fs::read(work.join("reports/metrics.csv")).unwrap()
    );
}

#[test]
fn probe_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &fixtures().join("cache"));
    ok(&["run", "--config", s(&config), "--stages", "generate,filter,vote,expand,annotate"]);

    let pairs = dir.path().join("pairs.json");
    let out = ok(&[
        "probe", "build-pairs", "--config", s(&config), "--level", "mid", "--ratio", "1.13", "--seed", "3",
        "--level-agg", "per-layer-mean-metrics", "--out", s(&pairs),
    ]);
    assert_eq!(out.lines().filter(|l| l.starts_with("layers")).count(), 3);

    let linear = dir.path().join("linear.json");
    ok(&["probe", "train", "--pairs", s(&pairs), "--arch", "linear", "--epochs", "3", "--out", s(&linear)]);
    let metrics: serde_json::Value = serde_json::from_str(&ok(&["probe", "eval", "--params", s(&linear), "--pairs", s(&pairs)])).unwrap();
    assert_eq!(metrics["runs"].as_array().unwrap().len(), 3);
    assert!(metrics["prf"]["f1"].is_number());

    let identity: serde_json::Value =
        serde_json::from_str(&ok(&["probe", "attention-analysis", "--pairs", s(&pairs)])).unwrap();
    assert!(identity["target"]["avg"].is_number());
}

#[test]
fn review_list_and_resolve() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &fixtures().join("cache"));
    let text = std::fs::read_to_string(&config).unwrap().replace("[vote]\n", "[vote]\ninspection_sample = 2\n");
    std::fs::write(&config, text).unwrap();
    let work = dir.path().join("work");
    ok(&["datagen", "generate", "--config", s(&config), "--count", "7"]);
    ok(&["datagen", "filter", "--config", s(&config), "--threshold", "0.5"]);
    ok(&["datagen", "vote", "--config", s(&config)]);

    let pending = ok(&["datagen", "review", "list", "--work", s(&work), "--status", "pending"]);
    let first: serde_json::Value = serde_json::from_str(pending.lines().next().expect("inspection sample is queued")).unwrap();
    let id = first["item_id"].as_str().unwrap();
    let resolved = ok(&["datagen", "review", "resolve", "--work", s(&work), id, "--status", "reject"]);
    assert!(resolved.contains("\"rejected\""));
    let again = scenecog(&["datagen", "review", "resolve", "--work", s(&work), id, "--status", "accept"]);
    assert_eq!(again.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &fixtures().join("cache"));

    let order = scenecog(&["run", "--config", s(&config), "--stages", "filter,generate"]);
    assert_eq!(order.status.code(), Some(4));

    let bad_gold = dir.path().join("gold.jsonl");
    std::fs::write(&bad_gold, "{\"x\": 1}\n").unwrap();
    let comp = fixtures().join("completions/memory.jsonl");
    let invalid = scenecog(&[
        "eval", "outputs", "--completions", s(&comp), "--gold", s(&bad_gold), "--set", "memory", "--epoch", "1",
    ]);
    assert_eq!(invalid.status.code(), Some(2));

    let empty = tempfile::tempdir().unwrap();
    let other = tempfile::tempdir().unwrap();
    let miss = write_config(other.path(), empty.path());
    let provider = scenecog(&["datagen", "generate", "--config", s(&miss)]);
    assert_eq!(provider.status.code(), Some(3), "{}", String::from_utf8_lossy(&provider.stderr));

    let usage = scenecog(&["probe", "train", "--arch", "nonsense"]);
    assert_eq!(usage.status.code(), Some(2));
}
