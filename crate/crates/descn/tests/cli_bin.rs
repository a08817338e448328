//! Binary-level checks of the command-line contract: exit codes and the
//! single machine-parseable error line on failure.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_descn"))
}

#[test]
fn generate_then_train_then_evaluate_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let status = bin()
        .args([
            "generate",
            "--preset",
            "balanced",
            "--seed",
            "5",
            "--out",
            data.to_str().unwrap(),
            "--n-train",
            "400",
            "--n-test",
            "300",
        ])
        .status()
        .unwrap();
    assert!(status.success());

    let conf = dir.path().join("t.conf");
    std::fs::write(
        &conf,
        "train.epochs = 1\ntrain.shared_hidden = 8\ntrain.head_hidden = 4\ntrain.depth = 2\n",
    )
    .unwrap();
    let run = dir.path().join("run");
    let status = bin()
        .args([
            "train",
            "--train",
            data.join("train.csv").to_str().unwrap(),
            "--model",
            "tarnet",
            "--seed",
            "1",
            "--out",
            run.to_str().unwrap(),
            "--config",
            conf.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());

    let eval = dir.path().join("eval");
    let output = bin()
        .args([
            "evaluate",
            "--params",
            run.join("model.txt").to_str().unwrap(),
            "--test",
            data.join("test.csv").to_str().unwrap(),
            "--out",
            eval.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let metrics = std::fs::read_to_string(eval.join("metrics.csv")).unwrap();
    assert_eq!(
        metrics.lines().count(),
        4,
        "all four metrics with truth present"
    );
}

#[test]
fn failures_exit_nonzero_with_an_error_line() {
    let dir = tempfile::tempdir().unwrap();
    let output = bin()
        .args([
            "generate",
            "--preset",
            "no_such_preset",
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    let first = stderr.lines().next().unwrap_or_default();
    assert!(
        first.starts_with("error:"),
        "expected machine-parseable error line, got: {first}"
    );

    let output = bin()
        .args([
            "evaluate",
            "--params",
            "/nonexistent",
            "--test",
            "/nonexistent",
            "--out",
            "/tmp",
        ])
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).starts_with("error:"));
}
