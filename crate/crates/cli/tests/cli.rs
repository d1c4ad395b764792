use std::path::Path;
use std::process::Command;

use sharpap_cli::{run_experiment, run_timing_comparison, AttackerKind, ExperimentConfig};

fn config(attackers: &[AttackerKind]) -> ExperimentConfig {
    let mut cfg: ExperimentConfig = serde_json::from_str(
        r#"{
        "dataset": {"source": "synthetic", "config": {"num_users": 100, "num_items": 60, "mean_ratings_per_user": 15, "min_ratings_per_user": 6, "seed": 2}},
        "targets": {"count": 2},
        "attack": {"delta": 0.03, "profile_size": 6, "epsilon": 0.3, "outer_iters": 2,
                   "inner": {"dim": 4, "learning_rate": 0.01, "steps": 10, "l2_reg": 0.1, "init_std": 0.1}},
        "victims": [
            {"model": "wrmf", "train": {"dim": 4, "learning_rate": 0.01, "steps": 10, "l2_reg": 0.1, "init_std": 0.1}},
            {"model": "lightgcn", "train": {"dim": 4, "learning_rate": 0.05, "steps": 3, "init_std": 0.1, "layers": 1}}
        ],
        "eval": {"metrics": ["hr", "ndcg"], "ks": [5, 10], "repeats": 2},
        "seed": 5
    }"#,
    )
    .unwrap();
    cfg.attackers = attackers.to_vec();
    cfg
}

fn read(dir: &Path, rel: &str) -> Vec<u8> {
    std::fs::read(dir.join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

#[test]
fn report_cardinality_matches_attackers() {
    use AttackerKind::*;
    let cfg = config(&[Clean, Random, Sharpap]);
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&cfg, dir.path()).unwrap();
    assert_eq!(out.report.rows.len(), 3 * 2 * 2 * 2);
    assert_eq!(out.manifest.status, "complete");
    for f in &out.manifest.outputs {
        assert!(dir.path().join(&f.path).exists(), "{}", f.path);
    }
}

#[test]
fn reruns_are_byte_identical() {
    use AttackerKind::*;
    let cfg = config(&[Clean, Popular, Backbone, Sharpap]);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_experiment(&cfg, a.path()).unwrap();
    run_experiment(&cfg, b.path()).unwrap();
    for f in &ra.manifest.outputs {
        assert_eq!(read(a.path(), &f.path), read(b.path(), &f.path), "{}", f.path);
    }
    assert_eq!(read(a.path(), "manifest.json"), read(b.path(), "manifest.json"));
}

#[test]
fn timing_smoke_run_emits_two_rows() {
    let mut cfg = config(&[AttackerKind::Sharpap]);
    cfg.attack.outer_iters = 1;
    cfg.timing.trials = 2;
    let t = run_timing_comparison(&cfg).unwrap();
    assert_eq!(t.rows.len(), 2);
    assert_eq!(t.rows[0].epsilon, 0.0);
    let paired: Vec<f64> = (0..2)
        .map(|i| (t.rows[1].trial_seconds[i] - t.rows[0].trial_seconds[i]) / t.rows[0].trial_seconds[i] * 100.0)
        .collect();
    assert_eq!(t.paired_overhead_percent, paired);
    assert_eq!(t.overhead_percent, (paired[0] + paired[1]) / 2.0);
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sharpap"))
}

#[test]
fn binary_exit_codes_and_dry_run() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    std::fs::write(&good, config(&[AttackerKind::Random]).to_json().unwrap()).unwrap();
    let out = bin().args(["run", "--dry-run", "--config"]).arg(&good).output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("ingest -> attack -> evaluate -> landscape -> defend"), "{stdout}");
    assert!(!dir.path().join("out").exists());

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"dataset": {"source": "synthetic"}, "attack": {"epsilon": -0.5}}"#).unwrap();
    let out = bin().args(["run", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilon"));

    let missing = dir.path().join("data.csv");
    let cfg = format!(r#"{{"dataset": {{"source": "file", "path": {:?}}}}}"#, missing);
    let runtime = dir.path().join("runtime.json");
    std::fs::write(&runtime, cfg).unwrap();
    let out = bin().args(["ingest", "--config"]).arg(&runtime).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let manifest = std::fs::read_to_string(dir.path().join("o/manifest.json")).unwrap();
    assert!(manifest.contains("\"partial\""));
}

#[test]
fn ingest_writes_split_and_respects_out_and_seed_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(&path, config(&[AttackerKind::Random]).to_json().unwrap()).unwrap();
    let out = bin()
        .args(["ingest", "--seed", "9", "--threads", "1", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value = serde_json::from_slice(&read(&dir.path().join("o"), "manifest.json")).unwrap();
    assert_eq!(manifest["seed"], 9);
    assert!(dir.path().join("o/data/train.csv").exists());
}
