use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use varqpi::experiments::report;

fn varqpi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_varqpi"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_parseable_log() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("run.csv");
    let out = varqpi(&["run", "--seed", "1", "--out", path_arg(&csv), "--plot"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("converged=true"));
    let rows = report::read_run_log(&csv).unwrap();
    assert!(!rows.is_empty());
    assert_eq!(rows[0].iteration, 1);
    assert!(csv.with_extension("svg").exists());
}

#[test]
fn out_of_range_slip_is_usage_error() {
    let out = varqpi(&["run", "--beta", "0.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("slip"));
}

#[test]
fn exact_run_matches_oracle() {
    let out = varqpi(&["run", "--exact", "--beta", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("matches_oracle=true"), "{text}");
    assert!(text.contains("total_steps=0"), "{text}");
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"beta": 0.5, "exact": true}"#).unwrap();
    let out = varqpi(&["run", "--config", path_arg(&cfg)]);
    assert_eq!(out.status.code(), Some(1), "file value is used when no flag is given");
    let out = varqpi(&["run", "--config", path_arg(&cfg), "--beta", "0"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("total_steps=0"));
}

#[test]
fn bad_config_files_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = dir.path().join("u.json");
    fs::write(&unknown, r#"{"depht": 4}"#).unwrap();
    let out = varqpi(&["run", "--config", path_arg(&unknown)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("depht"));

    let broken = dir.path().join("b.json");
    fs::write(&broken, "{\n \"depth\": 4,\n \"beta\" 0.1\n}").unwrap();
    let out = varqpi(&["run", "--config", path_arg(&broken)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let out = varqpi(&["run", "--config", path_arg(&dir.path().join("missing.json"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_subcommand_and_help() {
    assert_eq!(varqpi(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(varqpi(&["--help"]).status.code(), Some(0));
}

#[test]
fn same_arguments_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let out = varqpi(&["run", "--seed", "7", "--beta", "0.1", "--out", path_arg(p)]);
        assert!(matches!(out.status.code(), Some(0) | Some(2)));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn kappa_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("k.csv");
    let out = varqpi(&["kappa", "--qubits", "2,3", "--trials", "5", "--out", path_arg(&csv)]);
    assert_eq!(out.status.code(), Some(0));
    let rows = report::read_kappa(&csv).unwrap();
    assert!(!rows.is_empty());
    for r in &rows {
        assert_eq!(r.violations, 0);
        assert!(r.mean_kappa >= 1.0 && r.mean_kappa <= r.bound_thm * (1.0 + 1e-9));
    }
}

#[test]
fn sparsity_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let out = varqpi(&["sparsity", "--qubits", "2,3", "--trials", "5", "--out", path_arg(&csv)]);
    assert_eq!(out.status.code(), Some(0));
    let rows = report::read_sparsity(&csv).unwrap();
    assert!(rows.iter().all(|r| r.max_row_nnz <= r.bound && r.violations == 0));
}

#[test]
fn decompose_check_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    let out = varqpi(&[
        "decompose-check", "--qubits", "1,2", "--trials", "3", "--out", path_arg(&csv),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let rows = report::read_decomposition(&csv).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.passed && r.reconstruction < 1e-10));
}
