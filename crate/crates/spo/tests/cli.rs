//! The `spo` binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn spo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spo"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("SPO_RUN_DIR")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = spo(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn gen(dir: &Path) {
    let d = dir.to_str().unwrap();
    ok(&["gen-data", "--out", d, "--grid", "5", "--blocks", "3", "--train", "20", "--dev", "8", "--test", "6", "--seed", "2"]);
}

fn field(line: &str, key: &str) -> f64 {
    let mut it = line.split_whitespace();
    while let Some(w) = it.next() {
        if w == key {
            return it.next().unwrap().parse().unwrap();
        }
    }
    panic!("{key} missing from `{line}`");
}

#[test]
fn gen_data_writes_requested_counts() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path());
    for (name, n) in [("train", 20), ("dev", 8), ("test", 6)] {
        let text = fs::read_to_string(dir.path().join(format!("{name}.jsonl"))).unwrap();
        assert_eq!(text.lines().count(), n);
    }
    assert!(dir.path().join("vocab.txt").is_file());
}

#[test]
fn baselines_on_the_dev_split() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path());
    let d = dir.path().to_str().unwrap();
    let expert = ok(&["eval", "--data", d, "--baseline", "expert"]);
    assert_eq!(field(&expert, "mean_error"), 0.0);
    let initial = ok(&["eval", "--data", d, "--baseline", "initial"]);
    let ds = spo::dataset::Dataset::load(dir.path()).unwrap();
    let expected = spo_core::world::initial_error_baseline(&ds.dev).unwrap();
    assert!((field(&initial, "mean_error") - expected).abs() < 1e-4);
}

#[test]
fn train_eval_report_and_reproduce() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    gen(&data);
    let d = data.to_str().unwrap();
    let run = dir.path().join("run");
    let r = run.to_str().unwrap();
    ok(&["train", "--data", d, "--out", r, "--algo", "ppo", "--sched", "history", "--lambda", "1.0", "--epochs", "2", "--seed", "4", "--max-steps", "12"]);
    for name in ["config.toml", "metrics.csv", "checkpoint.json", "summary.json"] {
        assert!(run.join(name).is_file(), "{name}");
    }
    let eval = ok(&["eval", "--model", run.join("checkpoint.json").to_str().unwrap(), "--data", d, "--split", "test"]);
    assert!(field(&eval, "mean_error") >= 0.0);

    // The echoed config alone reproduces the metrics byte for byte.
    let again = dir.path().join("again");
    ok(&["train", "--config", run.join("config.toml").to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(fs::read(run.join("metrics.csv")).unwrap(), fs::read(again.join("metrics.csv")).unwrap());

    let bc = dir.path().join("bc");
    ok(&["train", "--data", d, "--out", bc.to_str().unwrap(), "--algo", "bc", "--epochs", "1", "--max-steps", "12"]);
    let rows = spo::metrics::load(&bc.join("metrics.csv")).unwrap();
    assert!(rows.iter().all(|r| r.mode == spo_core::Mode::Lfd));

    let rep = dir.path().join("report");
    ok(&["report", "--runs", r, again.to_str().unwrap(), bc.to_str().unwrap(), "--out", rep.to_str().unwrap()]);
    let header = fs::read_to_string(rep.join("entropy.csv")).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "step,run,again,bc");
}

#[test]
fn run_dir_defaults_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    gen(&data);
    let run = dir.path().join("envrun");
    let out = Command::new(env!("CARGO_BIN_EXE_spo"))
        .args(["train", "--data", data.to_str().unwrap(), "--epochs", "1", "--max-steps", "8"])
        .env("SPO_RUN_DIR", &run)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(run.join("metrics.csv").is_file());
}

fn fails_with(args: &[&str], code: i32, category: &str) {
    let out = spo(args);
    assert_eq!(out.status.code(), Some(code), "{args:?}");
    let err = String::from_utf8(out.stderr).unwrap();
    let last = err.lines().last().unwrap();
    assert!(last.starts_with(&format!("error[{category}]: ")), "{last}");
}

#[test]
fn errors_have_categories_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    gen(&data);
    let d = data.to_str().unwrap();
    let missing = dir.path().join("missing");
    fails_with(&["eval", "--data", missing.to_str().unwrap(), "--baseline", "initial"], 5, "data");
    let r = dir.path().join("r");
    fails_with(&["train", "--data", d, "--out", r.to_str().unwrap(), "--algo", "bc", "--sched", "history"], 3, "config");
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[trainer]\nepochz = 1\n").unwrap();
    fails_with(&["train", "--config", cfg.to_str().unwrap(), "--data", d, "--out", r.to_str().unwrap()], 3, "config");

    // A checkpoint for a different block count.
    let other = dir.path().join("other");
    ok(&["gen-data", "--out", other.to_str().unwrap(), "--grid", "5", "--blocks", "4", "--train", "10", "--dev", "4", "--test", "4"]);
    let run = dir.path().join("run4");
    ok(&["train", "--data", other.to_str().unwrap(), "--out", run.to_str().unwrap(), "--epochs", "1", "--max-steps", "8"]);
    fails_with(&["eval", "--model", run.join("checkpoint.json").to_str().unwrap(), "--data", d], 6, "mismatch");
    fails_with(&["eval", "--data", d, "--baseline", "initial", "--split", "nope"], 3, "config");
}
