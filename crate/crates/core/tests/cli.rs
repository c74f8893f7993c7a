use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use augtool::corpus::{save_tsv, SplitKind};
use augtool::fixtures;
use serde_json::{json, Value};

fn augtool(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_augtool"))
        .args(args)
        .env_remove("AUGTOOL_BACKEND_CMD")
        .output()
        .expect("binary runs")
}

fn fake_backend() -> String {
    let script: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "fixtures", "fake_backend.py"].iter().collect();
    format!("python3 '{}'", script.display())
}

/// Writes toy train/dev/test TSVs and a config pointing at them (relative paths).
fn workspace(dir: &Path, backend: Value) -> PathBuf {
    let task = fixtures::toy_task();
    let data = fixtures::toy_experiment_data(40, 20, 8);
    save_tsv(&data.train, dir.join("train.tsv")).unwrap();
    save_tsv(&data.test, dir.join("test.tsv")).unwrap();
    save_tsv(&fixtures::separable_split(&task, 10, SplitKind::Dev, 99), dir.join("dev.tsv")).unwrap();
    let config = json!({
        "task": {"name": "toy", "labels": ["alpha", "beta"]},
        "data": {"train": "train.tsv", "dev": "dev.tsv", "test": "test.tsv"},
        "backend": backend,
        "classifier": {"kind": "bow_linear"},
        "experiment": {"n_per_class": 10, "dev_per_class": 10, "trials": 3, "master_seed": 5}
    });
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn subsample_augment_eval_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = workspace(tmp.path(), json!({"method": "mock"}));
    let run = tmp.path().join("run");

    let out = augtool(&["subsample", "--config", s(&cfg), "--n", "10", "--seed", "7", "--out", s(&run)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let train_sub = fs::read_to_string(run.join("train_sub.tsv")).unwrap();
    assert_eq!(train_sub.lines().count(), 20);
    assert_eq!(fs::read_to_string(run.join("dev_sub.tsv")).unwrap().lines().count(), 20);
    assert_eq!(manifest(&run)["command"], "subsample");
    assert_eq!(manifest(&run)["master_seed"], 7);

    let aug = tmp.path().join("aug");
    let args = |out: &Path| {
        vec![
            "augment".to_string(),
            "--config".into(),
            s(&cfg).into(),
            "--input".into(),
            s(&run.join("train_sub.tsv")).into(),
            "--dev".into(),
            s(&run.join("dev_sub.tsv")).into(),
            "--s".into(),
            "2".into(),
            "--seed".into(),
            "3".into(),
            "--out".into(),
            s(out).into(),
        ]
    };
    let a: Vec<String> = args(&aug);
    let out = augtool(&a.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let synthetic = fs::read_to_string(aug.join("synthetic.tsv")).unwrap();
    assert_eq!(synthetic.lines().count(), 40);
    let records = fs::read_to_string(aug.join("records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 40);
    let first: Value = serde_json::from_str(records.lines().next().unwrap()).unwrap();
    for key in ["source_id", "method", "label_assigned", "text", "raw_output", "label_emitted", "label_match", "seed"] {
        assert!(first.get(key).is_some(), "record lacks {key}");
    }

    // the same run with 4 workers writes the same bytes
    let aug4 = tmp.path().join("aug4");
    let mut a4 = args(&aug4);
    a4.extend(["--workers".into(), "4".into()]);
    let out = augtool(&a4.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(out.status.success());
    assert_eq!(fs::read(aug4.join("synthetic.tsv")).unwrap(), synthetic.as_bytes());
    assert_eq!(fs::read(aug4.join("records.jsonl")).unwrap(), records.as_bytes());

    let intrinsic = tmp.path().join("intrinsic");
    let syn_path = aug.join("synthetic.tsv");
    let out = augtool(&["eval", "--config", s(&cfg), "--mode", "intrinsic", "--synthetic", s(&syn_path), "--out", s(&intrinsic)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(intrinsic.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["n"], 40);
    assert_eq!(report["diversity"].as_array().unwrap().len(), 2);
    assert!(report["fidelity"]["accuracy"].as_f64().unwrap() > 0.5);

    let extrinsic = tmp.path().join("extrinsic");
    let out = augtool(&["eval", "--config", s(&cfg), "--mode", "extrinsic", "--trials", "2", "--out", s(&extrinsic)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(extrinsic.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["per_trial_accuracy"].as_array().unwrap().len(), 2);
    assert!(report["mean"].is_f64() && report["std"].is_f64());
    assert_eq!(report["method"], "mock");
    let table = fs::read_to_string(extrinsic.join("table.txt")).unwrap();
    assert!(table.contains("no_aug") && table.contains("mock") && table.contains("toy"));

    let out = augtool(&["report", s(&extrinsic.join("report.json"))]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), table);
}

#[test]
fn missing_config_exits_2() {
    let out = augtool(&["subsample", "--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = augtool(&["bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn capacity_error_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = workspace(tmp.path(), json!({"method": "mock"}));
    let out = augtool(&["subsample", "--config", s(&cfg), "--n", "35", "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));
}

#[test]
fn unreachable_backend_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = workspace(tmp.path(), json!({"method": "s2s_word", "backend_cmd": "/no/such/model-server"}));
    let out = augtool(&["augment", "--config", s(&cfg), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/model-server"));
}

#[test]
fn model_method_without_backend_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = workspace(tmp.path(), json!({"method": "mock"}));
    let out = augtool(&["augment", "--config", s(&cfg), "--method", "s2s_span", "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("backend_cmd"));
}

#[test]
fn backend_cmd_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = workspace(tmp.path(), json!({"method": "ae_prepend", "backend_cmd": "/no/such/model-server"}));
    let out_dir = tmp.path().join("o");
    let out = augtool(&[
        "augment", "--config", s(&cfg), "--backend-cmd", &fake_backend(), "--out", s(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(out_dir.join("synthetic.tsv")).unwrap().lines().count(), 80);
}

#[test]
fn degenerate_experiment_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = workspace(tmp.path(), json!({"method": "mock"}));
    // a classifier that cannot train makes every trial fail
    let mut config: Value = serde_json::from_str(&fs::read_to_string(&cfg).unwrap()).unwrap();
    config["classifier"] = json!({"kind": "external", "backend_cmd": "/no/such/classifier"});
    fs::write(&cfg, config.to_string()).unwrap();
    let out = augtool(&["eval", "--config", s(&cfg), "--mode", "extrinsic", "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}
