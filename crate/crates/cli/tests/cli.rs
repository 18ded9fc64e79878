use std::path::Path;
use std::process::{Command, Output};

use airpen_core::gestures::{template, GestureClass};
use airpen_core::trajectory::TrajectoryRecord;

fn airpen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_airpen"))
        .args(args)
        .env("AIRPEN_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = airpen(args);
    assert!(
        out.status.success(),
        "airpen {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_train_eval_prints_four_rows() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let model = dir.path().join("bilstm.model");
    ok(&["gen", "--out", s(&data), "--per-class-train", "12", "--per-class-test", "4", "--seed", "42"]);
    let log = ok(&["train", "--model", "bilstm", "--data", s(&data), "--out", s(&model), "--seed", "7", "--epochs", "3"]);
    assert_eq!(log.lines().filter(|l| l.starts_with("epoch")).count(), 3);
    let table = ok(&["eval", "--data", s(&data), "--model", s(&model), "--latency-repeats", "10"]);
    for label in ["DTW", "SVM", "LSTM", "Bi-LSTM"] {
        assert!(
            table.lines().any(|l| l.split_whitespace().next() == Some(label)),
            "row {label} missing:\n{table}"
        );
    }
}

#[test]
fn classify_zero_noise_swipe_left() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let model = dir.path().join("dtw.model");
    let input = dir.path().join("left.jsonl");
    ok(&["gen", "--out", s(&data), "--per-class-train", "10", "--per-class-test", "1"]);
    ok(&["train", "--model", "dtw_knn", "--data", s(&data), "--out", s(&model)]);
    let record = TrajectoryRecord::new(None, &template(GestureClass::SwipeLeft));
    std::fs::write(&input, record.to_line() + "\n").unwrap();
    let out = ok(&["classify", "--model", s(&model), "--input", s(&input)]);
    let event: serde_json::Value = serde_json::from_str(out.lines().next().unwrap()).unwrap();
    assert_eq!(event["decision"], "SwipeLeft", "{out}");
}

#[test]
fn missing_model_file_is_io_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["gen", "--out", s(&data), "--per-class-train", "2", "--per-class-test", "1"]);
    let missing = dir.path().join("nowhere.model");
    let out = airpen(&["eval", "--data", s(&data), "--model", s(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.model"));
}

#[test]
fn usage_errors_exit_one() {
    let out = airpen(&["train", "--model", "cnn3d"]);
    assert_eq!(out.status.code(), Some(1));
    let out = airpen(&["train", "--model", "svm", "--out", "x.model"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--data"));
    assert_eq!(airpen(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(airpen(&["--help"]).status.code(), Some(0));
}

#[test]
fn corrupt_model_is_model_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.model");
    std::fs::write(&bad, "{\"format\": \"something-else\"}").unwrap();
    let input = dir.path().join("t.jsonl");
    std::fs::write(&input, TrajectoryRecord::new(None, &template(GestureClass::Circle)).to_line()).unwrap();
    let out = airpen(&["classify", "--model", s(&bad), "--input", s(&input)]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}
