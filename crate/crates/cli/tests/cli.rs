use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_flowpf"));
    c.env_remove("FLOWPF_SEED");
    c
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const MINIMAL: &str = r#"{
    "schema_version": 1,
    "scenario": {"preset": "linear-gaussian"},
    "filters": [{"kind": "ekf", "label": "kf"}],
    "trials": 1,
    "steps": 2
}"#;

const SMALL: &str = r#"{
    "schema_version": 1,
    "scenario": {"preset": "linear-gaussian", "d": 9, "sigma_z": 1.0},
    "filters": [
        {"kind": "ekf", "label": "kf"},
        {"kind": "bpf", "n_particles": 40},
        {"kind": "pfpf-edh", "n_particles": 30},
        {"kind": "edh", "n_particles": 30}
    ],
    "trials": 2,
    "steps": 3,
    "seed": 4
}"#;

fn with_sweep(base: &str, sweep: &str) -> String {
    base.replacen("\"trials\"", &format!("\"sweep\": {sweep},\n    \"trials\""), 1)
}

#[test]
fn minimal_run_writes_three_artifacts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", MINIMAL);
    let out = tmp.path().join("nested/out");
    let o = run(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["steps.csv", "summary.json", "summary.txt"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("kf"));
    let csv = fs::read_to_string(out.join("steps.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&["run", "--config", s(&cfg), "--out", s(&a)]).status.success());
    assert!(run(&["run", "--config", s(&cfg), "--out", s(&b), "--workers", "2"])
        .status
        .success());
    for f in ["steps.csv", "summary.json", "summary.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn unknown_filter_is_rejected_by_key() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &MINIMAL.replace("\"ekf\"", "\"kalman\""));
    let o = run(&["run", "--config", s(&cfg), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("filters[0].kind"), "{err}");
    assert!(err.contains("kalman"), "{err}");
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn unknown_key_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        &MINIMAL.replace("\"steps\": 2", "\"steps\": 2, \"particles\": 5"),
    );
    let o = run(&["run", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stderr).unwrap().contains("particles"));
}

#[test]
fn dumped_config_reruns_identically() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &SMALL.replace("\"seed\": 4", "\"seed\": 1"));
    let dump = tmp.path().join("effective.json");
    let a = tmp.path().join("a");
    let o = run(&[
        "run",
        "--config",
        s(&cfg),
        "--out",
        s(&a),
        "--seed",
        "11",
        "--trials",
        "1",
        "--dump-config",
        s(&dump),
    ]);
    assert!(o.status.success());
    let text = fs::read_to_string(&dump).unwrap();
    assert!(text.contains("\"seed\": 11"));
    let b = tmp.path().join("b");
    assert!(run(&["run", "--config", s(&dump), "--out", s(&b)]).status.success());
    for f in ["steps.csv", "summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_falls_back_to_the_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &SMALL.replace(",\n    \"seed\": 4", ""));
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    let env_run = |dir: &Path| {
        bin()
            .args(["run", "--config", s(&cfg), "--out", s(dir)])
            .env("FLOWPF_SEED", "4")
            .output()
            .unwrap()
    };
    assert!(env_run(&a).status.success());
    assert!(run(&["run", "--config", s(&cfg), "--out", s(&b), "--seed", "4"])
        .status
        .success());
    assert!(run(&["run", "--config", s(&cfg), "--out", s(&c)]).status.success());
    let csv = |d: &Path| fs::read(d.join("steps.csv")).unwrap();
    assert_eq!(csv(&a), csv(&b));
    assert_ne!(csv(&a), csv(&c));
}

#[test]
fn sweep_over_one_value_matches_run() {
    let tmp = TempDir::new().unwrap();
    let plain = write_config(tmp.path(), "plain.json", SMALL);
    let swept = write_config(
        tmp.path(),
        "sweep.json",
        &with_sweep(SMALL, r#"{"parameter": "sigma_z", "values": [1.0]}"#),
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&["run", "--config", s(&plain), "--out", s(&a)]).status.success());
    let o = run(&["sweep", "--config", s(&swept), "--out", s(&b)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let point = b.join("sigma_z=1");
    for f in ["steps.csv", "summary.json", "summary.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(point.join(f)).unwrap(), "{f}");
    }
    assert!(b.join("summary.json").is_file());
    assert!(String::from_utf8(o.stdout).unwrap().contains("sigma_z = 1"));
}

#[test]
fn zero_sigma_p_point_equals_a_plain_run() {
    let tmp = TempDir::new().unwrap();
    let plain = write_config(tmp.path(), "plain.json", SMALL);
    let swept = write_config(
        tmp.path(),
        "sweep.json",
        &with_sweep(SMALL, r#"{"parameter": "sigma_p", "values": [0.0, 0.5]}"#),
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&["run", "--config", s(&plain), "--out", s(&a)]).status.success());
    assert!(run(&["sweep", "--config", s(&swept), "--out", s(&b)]).status.success());
    let zero = fs::read(b.join("sigma_p=0/steps.csv")).unwrap();
    assert_eq!(fs::read(a.join("steps.csv")).unwrap(), zero);
    assert_ne!(fs::read(b.join("sigma_p=0.5/steps.csv")).unwrap(), zero);
}

#[test]
fn sweep_requires_an_axis() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", MINIMAL);
    let o = run(&["sweep", "--config", s(&cfg), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stderr).unwrap().contains("sweep"));
}

#[test]
fn unknown_suite_is_a_usage_error() {
    let o = run(&["reproduce", "table-9"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("linear-gaussian"), "{err}");
}

#[test]
fn reproduce_prints_published_values() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("lg");
    let o = run(&[
        "reproduce",
        "linear-gaussian",
        "--trials",
        "1",
        "--steps",
        "1",
        "--out",
        s(&out),
    ]);
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("kf"));
    assert!(stdout.contains("0.18"));
    assert!(stdout.contains("PASS") || stdout.contains("FAIL"));
    assert!(out.join("sigma_z=1/steps.csv").is_file());
    assert!(out.join("comparison.txt").is_file());
}
