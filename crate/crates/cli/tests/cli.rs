use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn snperm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snperm")).args(args).output().expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_then_score_recovers_truth_value() {
    let dir = tempfile::tempdir().unwrap();
    let mtx = dir.path().join("a.mtx");
    let truth = dir.path().join("truth.txt");
    let out = snperm(&["gen", "--source", "pre-r", "--n", "12", "--seed", "3", "-o", path_str(&mtx), "--truth", path_str(&truth)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = snperm(&[
        "score", "--input", path_str(&mtx), "--perm", path_str(&truth), "--truth", path_str(&truth), "--double-sum",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["n"], 12);
    assert_eq!(v["r_score"], 0);
    assert_eq!(v["kendall_tau"], 1.0);
    let two_sum = v["two_sum"].as_f64().unwrap();
    assert!((v["two_sum_double"].as_f64().unwrap() - 2.0 * two_sum).abs() < 1e-9);
    assert!(v["lower_bound"].as_f64().unwrap() <= two_sum + 1e-9);
}

#[test]
fn solve_emits_versioned_record() {
    let out = snperm(&["solve", "--source", "pre-r", "--n", "20", "--seed", "1", "--method", "spectral"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["schema"], "snperm/1");
    assert_eq!(v["n"], 20);
    let tau = v["kendall_tau"].as_f64().unwrap().max(v["kendall_tau_reversed"].as_f64().unwrap());
    assert_eq!(tau, 1.0);
}

#[test]
fn solve_is_deterministic() {
    let args = ["solve", "--n", "30", "--seed", "9", "--method", "fw_perm", "--constraints", "0.5n", "--mu-fraction", "0.5"];
    let a: serde_json::Value = serde_json::from_slice(&snperm(&args).stdout).unwrap();
    let b: serde_json::Value = serde_json::from_slice(&snperm(&args).stdout).unwrap();
    assert_eq!(a["permutation"], b["permutation"]);
    assert_eq!(a["two_sum"], b["two_sum"]);
    assert_eq!(a["constraints_used"], 15);
}

#[test]
fn solve_reads_matrix_file() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("a.csv");
    fs::write(&csv, "0,1,0\n1,0,1\n0,1,0\n").unwrap();
    let out = snperm(&["solve", "--input", path_str(&csv), "--method", "splitqp"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["two_sum"], 2.0);
}

#[test]
fn export_writes_parseable_mps() {
    let dir = tempfile::tempdir().unwrap();
    let mps = dir.path().join("p.mps");
    let out = snperm(&["export", "--n", "6", "--seed", "2", "--network", "odd-even", "--constraints", "3", "-o", path_str(&mps)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let model = snperm_core::snpoly::mps::parse(&fs::read_to_string(&mps).unwrap()).unwrap();
    assert!(model.row_names.iter().any(|r| r.starts_with('S')));
    assert!(!model.hessian.is_empty());
}

#[test]
fn sweep_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = snperm(&[
        "sweep", "--n", "15", "--seeds", "2", "--methods", "spectral,splitqp", "--mu-fractions", "0,0.5",
        "--constraint-levels", "1n", "--trials", "5", "-o", path_str(dir.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let records = fs::read_to_string(dir.path().join("records.jsonl")).unwrap();
    // 2 seeds × (1 spectral + 2 splitqp)
    assert_eq!(records.lines().count(), 6);
    let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(dir.path().join("traces.csv").exists());
}

#[test]
fn invalid_input_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "0,1\n2,0\n").unwrap();
    let out = snperm(&["solve", "--input", path_str(&bad), "--method", "spectral"]);
    assert_eq!(out.status.code(), Some(3));

    let out = snperm(&["solve", "--mu-fraction", "1.5", "--n", "10"]);
    assert_eq!(out.status.code(), Some(3));

    let out = snperm(&["solve", "--method", "simplex"]);
    assert_eq!(out.status.code(), Some(3));

    let out = snperm(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn iteration_cap_exits_with_2() {
    let out = snperm(&["solve", "--n", "40", "--seed", "4", "--method", "fw_perm", "--constraints", "1n", "--max-iter", "1", "--tol", "1e-9"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    // the partial record is still printed
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["converged"], false);
}
