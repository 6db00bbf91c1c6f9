use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_coincide");
const CONFIGS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/configs");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn config(name: &str) -> String {
    format!("{CONFIGS}/{name}")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn check_invariance_exit_codes() {
    let ok = run(&["check-invariance", &config("logistic_1d.toml")]);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    assert!(stdout(&ok).contains("PASS  invariance:sampled"));
    let bad = run(&["check-invariance", &config("coupled_counterexample.toml")]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(stdout(&bad).contains("FAIL  invariance:sampled"));
}

#[test]
fn solve_writes_solution_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["solve", &config("manufactured_1d.toml"), "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(Path::new(out).join("solution.csv").exists());
    let report = std::fs::read_to_string(Path::new(out).join("report.txt")).unwrap();
    assert!(report.contains("solution.csv"));

    // Restarting from the converged field needs no further iterations.
    let init = Path::new(out).join("solution.csv");
    let again = tempfile::tempdir().unwrap();
    let o = run(&["solve", &config("manufactured_1d.toml"), "--init", init.to_str().unwrap(), "--out", again.path().to_str().unwrap(), "--machine"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["solves"][0]["termination"], "converged");
}

#[test]
fn solver_failure_and_refusal_codes() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("manufactured_1d.toml")).unwrap().replace("tol_res = 1e-8", "tol_res = 1e-8\nmax_iters = 1\nadaptive_damping = false");
    let path = dir.path().join("short.toml");
    std::fs::write(&path, text).unwrap();
    let o = run(&["solve", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
    assert!(!dir.path().join("solution.csv").exists());

    let o = run(&["solve", &config("coupled_counterexample.toml")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("witness node"));
}

#[test]
fn solve_rn_writes_levels_and_tail_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["solve-rn", &config("decaying_rn.toml"), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let tail = std::fs::read_to_string(dir.path().join("tail.csv")).unwrap();
    assert!(tail.starts_with("n,R_probe,l2_tail,h1_tail,diff_h1\n"));
    assert!(dir.path().join("level_1.csv").exists());
}

#[test]
fn small_commands() {
    let o = run(&["project", &config("logistic_1d.toml"), "--x", "0.3", "--u", "-2"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("projection = [0.0]"));

    let o = run(&["exponents", "--s", "1.5", "--q", "1.2", "--n", "3"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("gamma1 = 0.375000000000"));
    assert!(stdout(&o).contains("p_embed = 2.400000000000"));

    let o = run(&["degree", "--map", "-u1", "--map", "-u2", "--lo=-1,-1", "--hi", "1,1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("degree = 1"));
    assert!(stdout(&o).contains("boundary count = 1 (consistent)"));
}

#[test]
fn usage_and_config_errors_exit_with_one() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["solve", "/nonexistent/config.toml"]).status.code(), Some(1));
    assert_eq!(run(&["exponents", "--s", "3", "--q", "1", "--n", "3"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}
