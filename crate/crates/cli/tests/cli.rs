use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtdc-opf")).args(args).env_remove("MTDC_OPF_BACKEND").output().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn bundled_case_validates() {
    let out = run(&["validate", "--case", "fig4"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("case is valid"));
    assert!(!run(&["validate", "--case", "/nonexistent/case.toml"]).status.success());
}

#[test]
fn centralized_async_is_a_usage_error() {
    let out = run(&["solve", "--path", "centralized", "--async", "--situation", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--path gbd"));
    assert_eq!(run(&["gbd", "--mode", "ropf"]).status.code(), Some(2));
    assert_eq!(run(&["gbd", "--situation", "4"]).status.code(), Some(2));
}

#[test]
fn solve_then_evaluate_deterministic_decisions() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = run(&["solve", "--mode", "dopf", "--out", d]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sol = json(&dir.path().join("solution.json"));
    assert_eq!(sol["format_version"], 1);
    assert_eq!(sol["status"], "optimal");
    assert_eq!(sol["topology"].as_array().unwrap().len(), 6);
    assert!(dir.path().join("cones.json").exists());

    let decisions = dir.path().join("decisions.json");
    let ev = run(&["evaluate", "--decisions", decisions.to_str().unwrap(), "--samples", "5", "--out", d]);
    assert!(ev.status.success());
    let rep = json(&dir.path().join("robustness.json"));
    assert!(rep["feasible_ratio"].as_f64().unwrap() < 1.0);
    assert_eq!(std::fs::read_to_string(dir.path().join("samples.csv")).unwrap().lines().count(), 6);

    let zero = run(&["evaluate", "--decisions", decisions.to_str().unwrap(), "--samples", "0", "--out", d]);
    assert_eq!(zero.status.code(), Some(1));
}

#[test]
fn gbd_trace_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = run(&["gbd", "--mode", "dopf", "--situation", "2", "--jitter", "0.2", "--seed", "3", "--out", dir.path().to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |d: &tempfile::TempDir, f: &str| std::fs::read(d.path().join(f)).unwrap();
    assert_eq!(read(&a, "trace.csv"), read(&b, "trace.csv"));
    assert_eq!(read(&a, "gbd.json"), read(&b, "gbd.json"));
    let s = json(&a.path().join("gbd.json"));
    assert_eq!(s["converged"], true);
    assert!(s["note"].as_str().unwrap().contains("asynchronous"));
}

#[test]
fn accuracy_report_lists_every_round() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["accuracy", "--mode", "dopf", "--rounds", "2", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let rep = json(&dir.path().join("accuracy.json"));
    let e: Vec<f64> = rep["errors"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(e.len(), 3);
    assert!(e[2] < e[0]);
    let csv = std::fs::read_to_string(dir.path().join("accuracy.csv")).unwrap();
    assert!(csv.starts_with("round,node,u_linear,u_nonlinear,abs_error"));
}

#[test]
fn unknown_backend_is_reported() {
    let out = Command::new(env!("CARGO_BIN_EXE_mtdc-opf"))
        .args(["validate"])
        .env("MTDC_OPF_BACKEND", "nonesuch")
        .output()
        .unwrap();
    // validate needs no solver, but the backend is still parsed up front
    assert_eq!(out.status.code(), Some(1));
}
