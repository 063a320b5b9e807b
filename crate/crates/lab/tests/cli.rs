use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn post(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_post"))
        .args(args)
        .current_dir(dir)
        .env_remove("POST_OUT_DIR")
        .env_remove("POST_THREADS")
        .output()
        .expect("spawn post")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn invalid_beta_names_the_field() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"experiment": "approx-rates", "params": {"beta": 1.5, "T": 1024, "N_list": [4]}}"#,
    );
    let out = post(dir.path(), &["run", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("beta"), "{stderr}");
    assert!(!dir.path().join("approx-rates.csv").exists());
}

#[test]
fn every_violation_is_listed() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"experiment": "approx-rates", "params": {"beta": 0.0, "T": 0.5, "N_list": [0]}}"#,
    );
    let out = post(dir.path(), &["run", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    for field in ["beta", "T", "N_list"] {
        assert!(stderr.contains(field), "missing {field}: {stderr}");
    }
}

#[test]
fn missing_config_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let out = post(dir.path(), &["run", "does-not-exist.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does-not-exist.json"));
}

#[test]
fn malformed_config_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "bad.json", "{ not json");
    assert_eq!(post(dir.path(), &["run", &cfg]).status.code(), Some(1));
}

#[test]
fn collapse_csv_schema_and_out_dir() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "collapse.json",
        r#"{"experiment": "collapse", "seed": 7, "params": {"N_list": [8, 16, 32], "trials": 10000}}"#,
    );
    let out_dir = dir.path().join("out");
    let out = post(dir.path(), &["--out-dir", out_dir.to_str().unwrap(), "run", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("collapse.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(
        header.starts_with("N,mean_min_gap,closed_form,stderr,mean_max_coherence"),
        "{header}"
    );
    assert_eq!(csv.lines().count(), 4);
    assert!(out_dir.join("collapse.csv.meta.json").exists());
}

#[test]
fn out_dir_from_environment() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.json",
        r#"{"experiment": "spectrum-report", "params": {"N": 4, "T": 64}}"#,
    );
    let out_dir = dir.path().join("env-out");
    let out = Command::new(env!("CARGO_BIN_EXE_post"))
        .args(["run", &cfg])
        .current_dir(dir.path())
        .env("POST_OUT_DIR", &out_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(out_dir.join("spectrum-report.csv").exists());
}

#[test]
fn mixed_report_fails_but_writes_summary() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "mixed.json",
        r#"{"experiments": [
            {"name": "ok", "experiment": "spectrum-report", "params": {"N": 4, "T": 64}},
            {"name": "bad", "experiment": "approx-rates", "params": {"beta": 0.5, "T": 16, "N_list": [2], "seeds": 4}}
        ]}"#,
    );
    let out = post(dir.path(), &["report", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("[FAIL] bad/strategy_ordering"), "{stdout}");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], false);
    assert_eq!(report["experiments"][0]["passed"], true);
    assert_eq!(report["experiments"][1]["passed"], false);
}

#[test]
fn empty_report_has_metadata() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "empty.json", r#"{"experiments": []}"#);
    let out = post(dir.path(), &["report", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["experiments"].as_array().unwrap().len(), 0);
    assert!(report["metadata"]["version"].is_string());
}

#[test]
fn seed_flag_overrides_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"experiment": "collapse", "seed": 1, "params": {"N_list": [8], "trials": 10000}}"#,
    );
    let run = |seed: &str, sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = post(
            dir.path(),
            &["--seed", seed, "--out-dir", out_dir.to_str().unwrap(), "run", &cfg],
        );
        assert!(out.status.success());
        fs::read(out_dir.join("collapse.csv")).unwrap()
    };
    assert_eq!(run("5", "a"), run("5", "b"));
    assert_ne!(run("5", "a"), run("6", "c"));
}
