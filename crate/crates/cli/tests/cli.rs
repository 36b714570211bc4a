use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn small_config(dir: &Path) -> std::path::PathBuf {
    let cfg = json!({
        "synth": {"n_passages": 20},
        "train": {"max_epochs": 2, "batch_size": 4, "grad_accum_steps": 2},
        "model": {"hidden": 16, "enc_dim": 12}
    });
    let path = dir.join("config.json");
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_speechrag"))
        .args(args)
        .env("SPEECHRAG_DATA_DIR", dir)
        .output()
        .unwrap()
}

fn run_ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn prepared() -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path()).display().to_string();
    for cmd in ["synth", "split", "train"] {
        run_ok(dir.path(), &[cmd, "--config", &cfg]);
    }
    (dir, cfg)
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["frobnicate"][..], &["eval-retrieval", "--bogus"], &[], &["embed", "--mode", "telepathy"]] {
        let out = run(dir.path(), args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.starts_with("error:") || stderr.contains("Usage:"), "{args:?}");
    }
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(dir.path(), &["--help"]).status.success());
    assert!(run(dir.path(), &["noise-sweep", "--help"]).status.success());
    let out = run(dir.path(), &["--version"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["split"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("speechrag synth"));
    assert_eq!(run(dir.path(), &["eval-retrieval", "--k", "10,5"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["--config", "/nonexistent.json", "synth"]).status.code(), Some(2));
}

#[test]
fn gradcheck_reports_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = run_ok(dir.path(), &["gradcheck", "--probes", "8", "--passages", "2"]);
    let last = stdout.lines().last().unwrap();
    assert!(last.starts_with("max relative error"), "{stdout}");
    assert!(last.ends_with("PASS"), "{stdout}");
    let report: Value = serde_json::from_slice(&fs::read(dir.path().join("reports/gradcheck.json")).unwrap()).unwrap();
    assert!(report["max_rel_error"].as_f64().unwrap() <= 1e-4);
    assert_eq!(report["tensors"].as_array().unwrap().len(), 6);
}

#[test]
fn gradcheck_fails_on_impossible_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["gradcheck", "--probes", "4", "--passages", "2", "--threshold", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn eval_retrieval_writes_three_recall_columns() {
    let (dir, cfg) = prepared();
    run_ok(dir.path(), &["eval-retrieval", "--config", &cfg, "--mode", "speech", "--k", "5,10,100"]);
    let rows = csv_rows(&dir.path().join("reports/eval_retrieval.csv"));
    assert_eq!(rows[0], ["mode", "target_wer", "recall@5", "recall@10", "recall@100"]);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1][0], "speech_rag");
    for cell in &rows[1][2..] {
        let r: f64 = cell.parse().unwrap();
        assert!((0.0..=1.0).contains(&r));
    }
    let per_query = fs::read_to_string(dir.path().join("reports/eval_retrieval_speech_rag.jsonl")).unwrap();
    assert_eq!(per_query.lines().count(), 2, "20 passages leave a test split of 2");
}

#[test]
fn cascaded_rows_follow_target_wers() {
    let (dir, cfg) = prepared();
    run_ok(
        dir.path(),
        &["eval-retrieval", "--config", &cfg, "--mode", "cascaded,gt_text", "--target-wer", "0.2,0.4", "--split", "all"],
    );
    let rows = csv_rows(&dir.path().join("reports/eval_retrieval.csv"));
    let labels: Vec<(&str, &str)> = rows[1..].iter().map(|r| (r[0].as_str(), r[1].as_str())).collect();
    assert_eq!(labels, [("fully_cascaded", "0.2"), ("fully_cascaded", "0.4"), ("gt_text", "")]);
}

#[test]
fn noise_sweep_has_both_modes_per_snr() {
    let (dir, cfg) = prepared();
    run_ok(dir.path(), &["noise-sweep", "--config", &cfg, "--snr", "-5,0,5,10,20,30"]);
    let rows = csv_rows(&dir.path().join("reports/noise_sweep.csv"));
    assert_eq!(&rows[0][..3], ["snr_db", "mode", "asr_wer"]);
    assert_eq!(rows.len(), 1 + 12);
    for (pair, snr) in rows[1..].chunks(2).zip(["-5", "0", "5", "10", "20", "30"]) {
        assert_eq!((pair[0][0].as_str(), pair[0][1].as_str()), (snr, "speech_rag"));
        assert_eq!((pair[1][0].as_str(), pair[1][1].as_str()), (snr, "fully_cascaded"));
        assert!(pair[0][2].is_empty());
        assert!(pair[1][2].parse::<f64>().is_ok());
    }
}

#[test]
fn corrupt_and_generation_tables() {
    let (dir, cfg) = prepared();
    let out = run_ok(dir.path(), &["corrupt", "--config", &cfg, "--target-wer", "0,0.3"]);
    assert!(out.contains("achieved_wer"));
    let rows = csv_rows(&dir.path().join("reports/corrupt.csv"));
    assert_eq!(rows[1][..2], ["0", "0.0000"]);
    let identical = fs::read_to_string(dir.path().join("reports/corrupt_wer0.jsonl")).unwrap();
    for line in identical.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["reference"], v["hypothesis"]);
    }

    run_ok(dir.path(), &["eval-generation", "--config", &cfg, "--target-wer", "0.3", "--top-k-context", "2"]);
    let rows = csv_rows(&dir.path().join("reports/eval_generation.csv"));
    let modes: Vec<&str> = rows[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(modes, ["speech_rag", "semi_cascaded", "fully_cascaded", "gt_text"]);
    let trace: Value = serde_json::from_str(
        fs::read_to_string(dir.path().join("reports/generation_gt_text.jsonl"))
            .unwrap()
            .lines()
            .next()
            .unwrap(),
    )
    .unwrap();
    assert_eq!(trace["contexts"].as_array().unwrap().len(), 2);
    assert!(trace["prompt"].as_str().unwrap().contains("Question:"));
}

#[test]
fn embed_index_search_chain() {
    let (dir, cfg) = prepared();
    run_ok(dir.path(), &["embed", "--config", &cfg, "--mode", "gt_text", "--split", "all"]);
    run_ok(dir.path(), &["index", "--config", &cfg, "--mode", "gt_text", "--split", "all"]);
    assert!(dir.path().join("indexes/all_ground_truth.idx").exists());
    let manifest = fs::read_to_string(dir.path().join("corpus/manifest.jsonl")).unwrap();
    let first_passage: Value = serde_json::from_str(manifest.lines().next().unwrap()).unwrap();
    let text = first_passage["transcript"].as_str().unwrap();
    let stdout = run_ok(dir.path(), &["search", "--config", &cfg, "--mode", "gt_text", "--split", "all", "--k", "3", text]);
    let hits: Vec<Value> = stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(hits.len(), 3);
    assert_eq!(hits[0]["id"], first_passage["id"]);
    assert!((hits[0]["score"].as_f64().unwrap() - 1.0).abs() < 1e-6);

    let out = run(dir.path(), &["search", "--config", &cfg, "--mode", "speech", "--split", "all", "x"]);
    assert_eq!(out.status.code(), Some(2), "no speech index was built");
    assert_eq!(
        run(dir.path(), &["embed", "--config", &cfg, "--mode", "gt_text", "--snr", "5"]).status.code(),
        Some(2)
    );
}

#[test]
fn metadata_record_reruns_the_same_experiment() {
    let (dir, cfg) = prepared();
    run_ok(dir.path(), &["--seed", "7", "eval-retrieval", "--config", &cfg, "--mode", "gt_text", "--k", "1,2"]);
    let meta_path = dir.path().join("reports/eval-retrieval.meta.json");
    let meta: Value = serde_json::from_slice(&fs::read(&meta_path).unwrap()).unwrap();
    assert_eq!(meta["command"], "eval-retrieval");
    assert_eq!(meta["seed"], 7);
    assert_eq!(meta["config"]["k"], json!([1, 2]));
    assert_eq!(meta["config_sha256"].as_str().unwrap().len(), 64);
    assert!(meta["versions"]["speechrag"].is_string());
    let table = fs::read(dir.path().join("reports/eval_retrieval.csv")).unwrap();

    let saved = dir.path().join("rerun.json");
    fs::copy(&meta_path, &saved).unwrap();
    run_ok(dir.path(), &["eval-retrieval", "--config", saved.to_str().unwrap(), "--mode", "gt_text"]);
    assert_eq!(fs::read(dir.path().join("reports/eval_retrieval.csv")).unwrap(), table);
    let again: Value = serde_json::from_slice(&fs::read(&meta_path).unwrap()).unwrap();
    assert_eq!(again["config_sha256"], meta["config_sha256"]);
}

#[test]
fn seed_flag_changes_the_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path()).display().to_string();
    run_ok(dir.path(), &["synth", "--config", &cfg]);
    let a = fs::read(dir.path().join("corpus/manifest.jsonl")).unwrap();
    run_ok(dir.path(), &["synth", "--config", &cfg, "--seed", "8"]);
    let b = fs::read(dir.path().join("corpus/manifest.jsonl")).unwrap();
    assert_ne!(a, b);
    let meta: Value = serde_json::from_slice(&fs::read(dir.path().join("reports/synth.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["synth"]["seed"], 8);
    assert_eq!(meta["config"]["train"]["seed"], 8);
}
