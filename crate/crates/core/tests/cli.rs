//! The `spinal` binary: exit codes, manifests and artifacts.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn spinal(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinal"))
        .args(args)
        .current_dir(dir)
        .env_remove("SPINE_SEED")
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn simulate_direct_writes_trajectory_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "simulate-direct", "--model", "builtin-constant", "--B", "1", "--p2", "1", "--t", "2", "--replicas", "200",
        "--seed", "5", "--output", "traj.jsonl",
    ];
    let out = spinal(&args, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("traj.jsonl")).unwrap();
    assert!(text.lines().all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("traj.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["config"]["params"]["p2"], 1.0);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert!(stderr(&out).contains("mean population size"));
}

#[test]
fn manifest_rerun_reproduces_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "compare", "--model", "yule", "--t", "0.5", "--replicas", "300", "--seed", "7", "--output", "first.csv",
    ];
    assert_eq!(spinal(&args, dir.path()).status.code(), Some(0));
    let out = spinal(
        &["compare", "--config", "first.csv.manifest.json", "--output", "second.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let first = fs::read(dir.path().join("first.csv")).unwrap();
    assert_eq!(first, fs::read(dir.path().join("second.csv")).unwrap());
    let header = String::from_utf8_lossy(&first).lines().next().unwrap().to_string();
    assert!(header.contains("ci_overlap"), "{header}");
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["estimate", "--model", "yule", "--t", "0.5", "--replicas", "100"];
    let flagged = [&base[..], &["--seed", "99", "--output", "flag.csv"]].concat();
    assert_eq!(spinal(&flagged, dir.path()).status.code(), Some(0));
    let env = Command::new(env!("CARGO_BIN_EXE_spinal"))
        .args([&base[..], &["--output", "env.csv"]].concat())
        .current_dir(dir.path())
        .env("SPINE_SEED", "99")
        .output()
        .unwrap();
    assert_eq!(env.status.code(), Some(0), "{}", stderr(&env));
    assert_eq!(fs::read(dir.path().join("flag.csv")).unwrap(), fs::read(dir.path().join("env.csv")).unwrap());
}

#[test]
fn unknown_keys_exit_two_and_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let out = spinal(&["estimate", "--set", "horizn=1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("horizn"), "{}", stderr(&out));

    fs::write(dir.path().join("cfg.json"), r#"{"model": "yule", "params": {"gamma": 1.0}}"#).unwrap();
    let out = spinal(&["estimate", "--config", "cfg.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("gamma"), "{}", stderr(&out));

    let out = spinal(&["estimate", "--replicas", "0"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = spinal(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = spinal(
        &["simulate-direct", "--model", "yule", "--mu", "800", "--t", "1", "--seed", "1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("majorant"), "{}", stderr(&out));
}

#[test]
fn long_format_csv_and_help() {
    let dir = tempfile::tempdir().unwrap();
    let out = spinal(
        &["simulate-spine", "--model", "yule", "--t", "0.5", "--replicas", "3", "--seed", "2", "--format", "csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("time,replica,statistic,value"));
    let help = spinal(&["--help"], dir.path());
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("Exit codes"));
}
