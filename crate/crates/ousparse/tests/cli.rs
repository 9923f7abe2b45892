//! End-to-end checks of the compiled binary: run a tiny scenario from a
//! JSON file, verify artifacts, replay a cell, and confirm error paths
//! exit nonzero.

use std::fs;
use std::process::Command;

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ousparse"))
}

const CONFIG: &str = r#"{
    "name": "cli smoke",
    "d": 2,
    "s": 3,
    "big_t": 5.0,
    "n_obs": 100,
    "model": {
        "sigma": {"kind": "scaled_identity", "scale": 1.0},
        "jumps": {"kind": "none"}
    },
    "truncation": {"mode": "fixed", "b": 1000.0, "eta": 1000.0},
    "estimators": ["lasso", "truncated_mle", "true_mle"],
    "tuning": {"mode": "fixed", "lambda": 0.05},
    "seeds": [0, 1]
}"#;

#[test]
fn run_then_replay_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("scenario.json");
    fs::write(&config_path, CONFIG).unwrap();
    let out_dir = dir.path().join("out");

    let run = binary()
        .arg("run")
        .arg(&config_path)
        .arg("--out")
        .arg(&out_dir)
        .arg("--workers")
        .arg("2")
        .output()
        .unwrap();
    assert!(
        run.status.success(),
        "run failed: {}",
        String::from_utf8_lossy(&run.stderr)
    );
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.contains("6 cell fits ok"), "stdout: {stdout}");

    for file in ["runs.csv", "summary.csv", "manifest.json"] {
        assert!(out_dir.join(file).exists(), "{file} missing");
    }
    for plot in ["l1_error.svg", "l2_error.svg", "kept_fraction.svg"] {
        assert!(out_dir.join("plots").join(plot).exists(), "{plot} missing");
    }
    let runs = fs::read_to_string(out_dir.join("runs.csv")).unwrap();
    assert!(runs.starts_with("scenario_hash,"));
    assert!(runs.contains("\r\n"));

    let replay = binary()
        .arg("replay")
        .arg(&out_dir)
        .arg("--seed")
        .arg("1")
        .arg("--estimator")
        .arg("true_mle")
        .output()
        .unwrap();
    assert!(
        replay.status.success(),
        "replay failed: {}",
        String::from_utf8_lossy(&replay.stderr)
    );
    let replay_out = String::from_utf8_lossy(&replay.stdout);
    assert!(
        replay_out.contains("matches the recorded run"),
        "stdout: {replay_out}"
    );
}

#[test]
fn invalid_config_exits_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("broken.json");
    fs::write(&config_path, CONFIG.replace("\"s\": 3", "\"s\": 9")).unwrap();
    let out = binary()
        .arg("run")
        .arg(&config_path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error"), "stderr: {stderr}");
    assert!(stderr.contains("sparsity"), "stderr: {stderr}");
}

#[test]
fn replay_of_an_unknown_cell_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("scenario.json");
    fs::write(&config_path, CONFIG).unwrap();
    let out_dir = dir.path().join("out");
    assert!(binary()
        .arg("run")
        .arg(&config_path)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap()
        .status
        .success());
    let replay = binary()
        .arg("replay")
        .arg(&out_dir)
        .arg("--seed")
        .arg("42")
        .arg("--estimator")
        .arg("lasso")
        .output()
        .unwrap();
    assert!(!replay.status.success());
    assert!(String::from_utf8_lossy(&replay.stderr).contains("no recorded run"));
}
