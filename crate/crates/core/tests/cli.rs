mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::json;
use tlvision::export::{Manifest, MODEL_WEIGHTS_FILE, RESULTS_FILE};
use tlvision::synthetic::SyntheticSpec;

use common::{config_document, dataset};

fn tlvision(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tlvision"))
        .args(args)
        .output()
        .expect("spawn tlvision")
}

fn stdout_line(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).trim().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a TOML config for the synthetic data and runs it once.
fn run_once(root: &Path, extra: &[&str]) -> (PathBuf, PathBuf) {
    let data = dataset(root, &SyntheticSpec::default());
    let doc = config_document(&data, &root.join("work"), json!({ "training": { "epochs": 2 } }));
    let config_path = root.join("exp.toml");
    std::fs::write(&config_path, toml::to_string(&doc).unwrap()).unwrap();
    let out_dir = root.join("runs");
    let mut args = vec!["run", "--config", s(&config_path), "--out", s(&out_dir), "--seed", "3"];
    args.extend_from_slice(extra);
    let out = tlvision(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (PathBuf::from(stdout_line(&out)), data.test)
}

#[test]
fn run_then_predict_extract_export() {
    let root = tempfile::tempdir().unwrap();
    let (run_dir, test_dir) = run_once(root.path(), &[]);
    assert!(run_dir.join(RESULTS_FILE).is_file());
    assert!(run_dir.join(MODEL_WEIGHTS_FILE).is_file());
    let name = run_dir.file_name().unwrap().to_string_lossy().into_owned();
    assert!(name.starts_with("run_") && name.len() == 12, "{name}");
    // the staging directory is cleaned up
    let leftovers: Vec<_> = std::fs::read_dir(root.path().join("runs"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(leftovers.len(), 1, "{leftovers:?}");

    let csv = root.path().join("preds.csv");
    let out = tlvision(&[
        "predict",
        "--run-dir",
        s(&run_dir),
        "--folder",
        s(&test_dir.join("red")),
        "--sort-by",
        "confidence",
        "--out",
        s(&csv),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 6);

    let stdout = tlvision(&["predict", "--run-dir", s(&run_dir), "--folder", s(&test_dir.join("red"))]);
    assert!(stdout.status.success());
    assert!(stdout_line(&stdout).starts_with("path,predicted_label,confidence,variance"));

    let feat = root.path().join("feat");
    let out = tlvision(&[
        "extract",
        "--run-dir",
        s(&run_dir),
        "--layer-name",
        "dense_1",
        "--out",
        s(&feat),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for split in ["train", "val", "test"] {
        let text = std::fs::read_to_string(feat.join(format!("features_{split}.csv"))).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header.split(',').count(), 2 + 16, "{header}");
    }

    let again = root.path().join("copies");
    let out = tlvision(&[
        "export",
        "--run-dir",
        s(&run_dir),
        "--out",
        s(&again),
        "--overwrite",
        "--no-model",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let copy = PathBuf::from(stdout_line(&out));
    assert_eq!(copy, again.join("run"));
    let manifest = Manifest::read(&copy).unwrap();
    assert!(manifest.files.iter().any(|f| f.path.starts_with("weights_best_val_loss_")));
    assert!(!copy.join(MODEL_WEIGHTS_FILE).exists());
}

#[test]
fn usage_errors_exit_two() {
    let out = tlvision(&["predict", "--folder", "somewhere"]);
    assert_eq!(out.status.code(), Some(2));
    let out = tlvision(&["extract", "--run-dir", "x"]);
    assert_eq!(out.status.code(), Some(2));
    let out = tlvision(&["extract", "--run-dir", "x", "--layer-name", "a", "--layer-index", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pipeline_errors_exit_one() {
    let root = tempfile::tempdir().unwrap();
    let missing = root.path().join("missing");
    let out = tlvision(&["predict", "--run-dir", s(&missing), "--folder", s(root.path())]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.trim().lines().count(), 1, "{stderr}");

    let out = tlvision(&["run", "--set", "training.epochs=0", "--out", s(root.path())]);
    assert_eq!(out.status.code(), Some(1));

    let out = tlvision(&["run", "--set", "no_equals_sign"]);
    assert_eq!(out.status.code(), Some(1));
}
