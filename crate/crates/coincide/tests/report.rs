use coincide::report::{machine_block, MACHINE_BEGIN, MACHINE_END};
use coincide::run::{check_invariance, solve, RunOptions};
use coincide::{parse_config, CheckStatus, ExitStatus, ForcingRegistry};
use coincide_core::Termination;

const MANUFACTURED: &str = include_str!("../configs/manufactured_1d.toml");
const COUPLED: &str = include_str!("../configs/coupled_counterexample.toml");

fn quiet() -> RunOptions {
    RunOptions::default()
}

#[test]
fn converged_report_states_the_residual_bound() {
    let mut cfg = parse_config(MANUFACTURED).unwrap();
    cfg.output.dir = None;
    let out = solve(&cfg, &ForcingRegistry::builtin(), &quiet()).unwrap();
    assert_eq!(out.status, ExitStatus::Success);
    assert_eq!(out.report.solves[0].termination, Termination::Converged);
    let text = out.report.render();
    let line = text.lines().find(|l| l.contains("residual") && l.contains("<= tol_res")).expect("residual line");
    assert!(line.trim_start().starts_with("PASS"), "{line}");
    assert!(text.contains("(tol_res 1.0e-8)"));
    assert_eq!(out.report.find("residual").unwrap().status, CheckStatus::Pass);
}

#[test]
fn refused_run_reports_the_witness_node() {
    let cfg = parse_config(COUPLED).unwrap();
    let out = solve(&cfg, &ForcingRegistry::builtin(), &quiet()).unwrap();
    assert_eq!(out.report.solves[0].termination, Termination::InvarianceRefused);
    assert_eq!(out.status, ExitStatus::ChecksFailed);
    let check = out.report.find("invariance").unwrap();
    assert_eq!(check.status, CheckStatus::Fail);
    assert!(check.detail.contains("witness node"), "{}", check.detail);
    assert!(out.report.render().contains("witness node"));
}

#[test]
fn seeded_reruns_give_identical_machine_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let reg = ForcingRegistry::builtin();
    let mut blocks = Vec::new();
    for k in 0..2 {
        let mut cfg = parse_config(COUPLED).unwrap();
        cfg.checks.seed = 5;
        let opts = RunOptions { out_dir: Some(dir.path().join(format!("run{k}"))), init: None };
        let out = check_invariance(&cfg, &reg, &opts).unwrap();
        assert_eq!(out.status, ExitStatus::ChecksFailed);
        let text = std::fs::read_to_string(dir.path().join(format!("run{k}/report.txt"))).unwrap();
        assert_eq!(text.matches(MACHINE_BEGIN).count(), 1);
        assert_eq!(text.matches(MACHINE_END).count(), 1);
        blocks.push(machine_block(&text).unwrap().to_string());
    }
    assert_eq!(blocks[0], blocks[1]);
    let v: serde_json::Value = serde_json::from_str(&blocks[0]).unwrap();
    assert_eq!(v["schema"], "coincide-report/1");
    assert!(v.get("timings").is_none());
}

#[test]
fn every_verdict_is_a_named_check() {
    let cfg = parse_config(COUPLED).unwrap();
    let out = check_invariance(&cfg, &ForcingRegistry::builtin(), &quiet()).unwrap();
    let names: Vec<&str> = out.report.checks.iter().map(|c| c.name.as_str()).collect();
    for n in ["criterion:eigenvector", "criterion:form_sign", "criterion:mueller", "invariance:sampled", "growth:forcing", "tangency:forcing"] {
        assert!(names.contains(&n), "{names:?}");
    }
    let inv = out.report.find("invariance:sampled").unwrap();
    assert_eq!(inv.status, CheckStatus::Fail);
    assert!(inv.detail.contains("at node"));
    let v: serde_json::Value = serde_json::from_str(&out.report.machine_json()).unwrap();
    assert_eq!(v["checks"].as_array().unwrap().len(), out.report.checks.len());
}
