//! The runs behind the command-line subcommands.
//!
//! Each runner builds the problem from a [`ProblemConfig`], performs the run,
//! records every verdict as a named check, writes field files and the report
//! when an output directory is given, and returns the report together with the
//! process exit status.

use std::path::{Path, PathBuf};
use std::time::Instant;

use coincide_core::criteria::{certifies_invariance, check_constraint, CriterionStatus};
use coincide_core::nonlinearity::{audit_tangency, growth_audit};
use coincide_core::operator::{assemble, estimate_garding};
use coincide_core::resolvent::{audit_generator_tangency, verify_resolvent_invariance};
use coincide_core::truncation::run_truncation;
use coincide_core::{Error, SolveReport, Termination, VectorField};

use crate::config::ProblemConfig;
use crate::error::{IoError, IoResult};
use crate::field_io::{self, fmt_num, Artifact};
use crate::registry::ForcingRegistry;
use crate::report::{emit_report, CheckStatus, RunReport};

/// Process exit status of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitStatus {
    /// Every check passed and the solver (if any) converged.
    Success,
    /// A check failed, including refusals by the solver's own checks.
    ChecksFailed,
    /// The solver did not produce a solution.
    SolverFailed,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            Self::Success => 0,
            Self::ChecksFailed => 2,
            Self::SolverFailed => 3,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Output directory; overrides `output.dir` of the configuration.
    pub out_dir: Option<PathBuf>,
    /// Initial field for `solve`.
    pub init: Option<PathBuf>,
}

impl RunOptions {
    fn dir(&self, cfg: &ProblemConfig) -> Option<PathBuf> {
        self.out_dir.clone().or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
    }
}

pub struct RunOutcome {
    pub report: RunReport,
    pub status: ExitStatus,
    pub solution: Option<VectorField>,
}

fn status_of(report: &RunReport) -> ExitStatus {
    if report.all_passed() {
        ExitStatus::Success
    } else {
        ExitStatus::ChecksFailed
    }
}

fn criterion_status(s: CriterionStatus) -> CheckStatus {
    match s {
        CriterionStatus::Pass => CheckStatus::Pass,
        CriterionStatus::Fail => CheckStatus::Fail,
        CriterionStatus::NotApplicable => CheckStatus::NotApplicable,
    }
}

fn prepare_dir(dir: &Path) -> IoResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))
}

fn finish(cfg: &ProblemConfig, opts: &RunOptions, report: &RunReport) -> IoResult<()> {
    if let Some(dir) = opts.dir(cfg) {
        prepare_dir(&dir)?;
        emit_report(report, &dir.join(&cfg.output.report))?;
    }
    Ok(())
}

fn dump(cfg: &ProblemConfig, opts: &RunOptions, name: &str, text: &str) -> IoResult<Option<Artifact>> {
    match opts.dir(cfg) {
        Some(dir) if cfg.output.dump_fields => {
            prepare_dir(&dir)?;
            Ok(Some(field_io::write_artifact(&dir, name, text)?))
        }
        _ => Ok(None),
    }
}

/// Criteria, sampled resolvent invariance and the forcing audits.
pub fn check_invariance(cfg: &ProblemConfig, registry: &ForcingRegistry, opts: &RunOptions) -> IoResult<RunOutcome> {
    let t0 = Instant::now();
    let mut report = RunReport::new("check-invariance", cfg.echo());
    let grid = cfg.grid()?;
    let coeffs = cfg.coefficients()?;
    let field = cfg.constraint_field()?;
    let forcing = cfg.forcing(registry)?;
    let op = assemble(&coeffs, &grid)?;
    let garding = estimate_garding(&op)?;
    report.check("garding", CheckStatus::Info, format!("omega = {:.6e}, alpha = {:.6e}", garding.omega, garding.alpha));
    report.garding = Some(garding);

    let criteria = check_constraint(&coeffs, &grid, &field);
    for r in &criteria {
        let detail = match r.witnesses.first() {
            Some(w) if r.status == CriterionStatus::Fail => format!("witness {} at x = {:?}, normal {:?}, value {:.3e}", w.label, w.x, w.normal, w.value),
            _ => r.margin.map_or("no margin".into(), |m| format!("margin {m:.3e}")),
        };
        report.check(format!("criterion:{}", serde_json::to_value(r.criterion).unwrap().as_str().unwrap_or("?")), criterion_status(r.status), detail);
    }
    let certified = certifies_invariance(&criteria);
    report.criteria = criteria;

    let hs = match &cfg.checks.h {
        Some(h) => h.clone(),
        None => cfg.solver_config().steps(&garding)?,
    };
    let inv = verify_resolvent_invariance(&op, &garding, &field, cfg.checks.invariance_samples, &hs, cfg.checks.seed)?;
    let detail = match inv.worst_failure() {
        Some(e) => format!("h = {:.4e}: distance {:.3e} > {:.3e} at node {} (x = {:?}), sample {}", e.h, e.worst_distance, e.tolerance, e.witness_node, e.witness_x, e.witness_sample),
        None => {
            let worst = inv.entries.iter().fold(0.0f64, |m, e| m.max(e.worst_distance));
            format!("{} samples x {} steps, worst distance {:.3e}", inv.samples, inv.entries.len(), worst)
        }
    };
    report.check("invariance:sampled", CheckStatus::from_bool(inv.pass), detail);
    if certified && !inv.pass {
        report.check("invariance:soundness", CheckStatus::Fail, "criteria certify invariance but sampling found a violation");
    }
    report.invariance = Some(inv);

    let gen = audit_generator_tangency(&op, &field, cfg.checks.generator_samples, cfg.checks.seed)?;
    report.check("tangency:generator", CheckStatus::Info, format!("{} of {} boundary nodes violate", gen.violations, gen.checked_nodes));
    report.generator_tangency = Some(gen);

    let tan = audit_tangency(&forcing, &field, &grid, cfg.checks.tangency_samples, cfg.checks.seed)?;
    let detail = match &tan.witness {
        Some(w) => format!("{} of {} violate; f = {:?} at x = {:?}, u = {:?}", tan.violations, tan.samples, w.f, w.x, w.u),
        None => format!("{} samples", tan.samples),
    };
    report.check("tangency:forcing", CheckStatus::from_bool(tan.pass), detail);
    report.tangency = Some(tan);

    let growth = growth_audit(&forcing, &field, &grid, cfg.checks.growth_samples, cfg.checks.seed)?;
    report.check("growth:forcing", CheckStatus::from_bool(growth.pass), format!("worst |f| / bound = {:.4}", growth.worst_ratio));
    report.growth = Some(growth);

    report.timings.push(("total".into(), t0.elapsed().as_secs_f64()));
    let status = status_of(&report);
    finish(cfg, opts, &report)?;
    Ok(RunOutcome { report, status, solution: None })
}

fn solve_checks(report: &mut RunReport, r: &SolveReport, prefix: &str) {
    report.check(format!("{prefix}termination"), CheckStatus::from_bool(r.converged()), format!("{:?} after {} iterations", r.termination, r.total_iterations));
    if let Some(inv) = r.invariance.iter().find(|i| !i.pass) {
        if let Some(e) = inv.worst_failure() {
            report.check(
                format!("{prefix}invariance"),
                CheckStatus::Fail,
                format!("h = {:.4e}: witness node {} at x = {:?}, distance {:.3e}", e.h, e.witness_node, e.witness_x, e.worst_distance),
            );
        }
    } else if !r.invariance.is_empty() {
        report.check(format!("{prefix}invariance"), CheckStatus::Pass, format!("{} step sizes sampled", r.invariance.len()));
    }
    if let Some(t) = &r.tangency {
        let detail = match &t.witness {
            Some(w) => format!("{} of {} violate; witness x = {:?}, u = {:?}", t.violations, t.samples, w.x, w.u),
            None => format!("{} samples", t.samples),
        };
        report.check(format!("{prefix}tangency"), CheckStatus::from_bool(t.pass), detail);
    }
    if r.converged() || r.termination == Termination::Stalled || r.termination == Termination::MaxIters {
        report.check(
            format!("{prefix}residual"),
            CheckStatus::from_bool(r.residual <= r.tol_res),
            format!("residual {:.6e} <= tol_res {:.1e}", r.residual, r.tol_res),
        );
        report.check(
            format!("{prefix}constraint"),
            CheckStatus::from_bool(r.max_iterate_violation <= r.tol_inv),
            format!("max iterate violation {:.3e} <= tol_inv {:.3e}", r.max_iterate_violation, r.tol_inv),
        );
        report.check(format!("{prefix}certificate"), CheckStatus::from_bool(r.certificate_holds), "residual bound held at every checked iterate");
    }
}

fn exit_for(t: Termination) -> ExitStatus {
    match t {
        Termination::Converged => ExitStatus::Success,
        Termination::InvarianceRefused | Termination::TangencyRefused => ExitStatus::ChecksFailed,
        Termination::MaxIters | Termination::Stalled | Termination::Diverged => ExitStatus::SolverFailed,
    }
}

/// Solves on the configured box.
pub fn solve(cfg: &ProblemConfig, registry: &ForcingRegistry, opts: &RunOptions) -> IoResult<RunOutcome> {
    let t0 = Instant::now();
    let mut report = RunReport::new("solve", cfg.echo());
    let grid = cfg.grid()?;
    let coeffs = cfg.coefficients()?;
    let field = cfg.constraint_field()?;
    let forcing = cfg.forcing(registry)?;
    let scfg = cfg.solver_config();
    let op = assemble(&coeffs, &grid)?;
    let garding = estimate_garding(&op)?;
    report.garding = Some(garding);
    let u0 = match &opts.init {
        Some(p) => field.project_field(&field_io::load_field_on(p, &grid, cfg.components())?)?,
        None => VectorField::zeros(grid, cfg.components()),
    };
    let t_setup = t0.elapsed().as_secs_f64();
    let result = coincide_core::solver::solve(&op, &garding, &field, &forcing, &scfg, &u0);
    report.timings.push(("setup".into(), t_setup));
    report.timings.push(("solve".into(), t0.elapsed().as_secs_f64() - t_setup));
    let r = match result {
        Ok(r) => r,
        Err(e) => {
            report.check("termination", CheckStatus::Fail, format!("solver error: {e}"));
            finish(cfg, opts, &report)?;
            return Ok(RunOutcome { report, status: ExitStatus::SolverFailed, solution: None });
        }
    };
    solve_checks(&mut report, &r, "");
    let status = match exit_for(r.termination) {
        ExitStatus::Success => status_of(&report),
        s => s,
    };
    let solution = r.solution.clone();
    if r.converged() {
        if let Some(a) = dump(cfg, opts, "solution.csv", &field_io::field_csv(&solution))? {
            report.artifacts.push(a);
        }
    }
    report.solves.push(r);
    finish(cfg, opts, &report)?;
    Ok(RunOutcome { report, status, solution: Some(solution) })
}

/// Expanding-box truncation.
pub fn solve_rn(cfg: &ProblemConfig, registry: &ForcingRegistry, opts: &RunOptions) -> IoResult<RunOutcome> {
    let t0 = Instant::now();
    let mut report = RunReport::new("solve-rn", cfg.echo());
    let problem = cfg.problem(registry)?;
    let schedule = cfg.schedule()?;
    let scfg = cfg.solver_config();
    let result = run_truncation(&problem, &schedule, &scfg);
    report.timings.push(("truncation".into(), t0.elapsed().as_secs_f64()));
    let out = match result {
        Ok(o) => o,
        Err(e) => {
            let status = match e {
                Error::TailStagnation { .. } => ExitStatus::ChecksFailed,
                _ => ExitStatus::SolverFailed,
            };
            report.check("truncation", CheckStatus::Fail, e.to_string());
            finish(cfg, opts, &report)?;
            return Ok(RunOutcome { report, status, solution: None });
        }
    };
    report.notes.push("the Cauchy tolerance is a practical stopping rule, not a bound on the distance to the whole-space solution".into());
    let tail = &out.tail;
    let last = tail.levels.last().expect("at least one level");
    report.check(
        "truncation:cauchy",
        CheckStatus::from_bool(tail.terminated_by_cauchy),
        format!("stopped at level {} with diff_H1 = {}", last.level, last.diff_h1.map_or("-".into(), |d| format!("{d:.3e}"))),
    );
    let diffs: Vec<f64> = tail.levels.iter().filter_map(|l| l.diff_h1).collect();
    let monotone = diffs.windows(2).all(|w| w[1] <= w[0]);
    report.check("truncation:diff_decreasing", CheckStatus::from_bool(monotone), format!("{} successive differences", diffs.len()));
    let probe_ok = tail.levels.iter().all(|l| l.tails.windows(2).all(|w| w[1].l2_tail <= w[0].l2_tail && w[1].h1_tail <= w[0].h1_tail));
    report.check("truncation:tail_monotone_in_probe", CheckStatus::from_bool(probe_ok), "tail norms nonincreasing in R_probe");
    let mut level_ok = true;
    for w in tail.levels.windows(2) {
        for t in &w[1].tails {
            if let Some(prev) = w[0].tails.iter().find(|p| p.probe == t.probe) {
                level_ok &= t.h1_tail <= prev.h1_tail;
            }
        }
    }
    report.check("truncation:h1_tail_monotone_in_level", CheckStatus::from_bool(level_ok), "H1 tail at each R_probe nonincreasing in n");
    let excess = tail.levels.iter().fold(f64::NEG_INFINITY, |m, l| m.max(l.envelope_excess));
    report.check("truncation:envelope", CheckStatus::from_bool(excess <= 1e-10), format!("max |u_n(x)| - m(x) = {excess:.3e}"));
    report.check("truncation:h2_bounded", CheckStatus::from_bool(tail.h2_bounded), "discrete H2 seminorm grows by at most 10% per level");

    for (k, s) in out.solves.iter().enumerate() {
        if let Some(a) = dump(cfg, opts, &format!("level_{}.csv", k + 1), &field_io::field_csv(&s.solution))? {
            report.artifacts.push(a);
        }
    }
    let mut rows = Vec::new();
    for l in &tail.levels {
        let diff = l.diff_h1.map_or(String::new(), fmt_num);
        for t in &l.tails {
            rows.push(vec![l.level.to_string(), fmt_num(t.probe), fmt_num(t.l2_tail), fmt_num(t.h1_tail), diff.clone()]);
        }
        if l.tails.is_empty() {
            rows.push(vec![l.level.to_string(), String::new(), String::new(), String::new(), diff.clone()]);
        }
    }
    let table = field_io::table_csv(&["n", "R_probe", "l2_tail", "h1_tail", "diff_h1"], &rows);
    if let Some(a) = dump(cfg, opts, "tail.csv", &table)? {
        report.artifacts.push(a);
    }
    let status = status_of(&report);
    let solution = out.solution.clone();
    report.solves = out.solves;
    report.tail = Some(out.tail);
    finish(cfg, opts, &report)?;
    Ok(RunOutcome { report, status, solution: Some(solution) })
}

/// Degree of `I − φ_h` on the box `[lo, hi]` for a configuration whose grid
/// has at most three unknowns in total.
pub fn phi_degree(
    cfg: &ProblemConfig,
    registry: &ForcingRegistry,
    h: f64,
    lo: &[f64],
    hi: &[f64],
    density: usize,
) -> IoResult<coincide_core::solver::DegreeReport> {
    let grid = cfg.grid()?;
    let m = cfg.components();
    let unknowns = grid.node_count() * m;
    if unknowns > 3 {
        return Err(IoError::Validation(format!("degree needs at most 3 unknowns, the grid has {unknowns}")));
    }
    if lo.len() != unknowns || hi.len() != unknowns {
        return Err(IoError::Validation(format!("the degree box needs {unknowns} bounds per side")));
    }
    let coeffs = cfg.coefficients()?;
    let field = cfg.constraint_field()?;
    let forcing = cfg.forcing(registry)?;
    let op = assemble(&coeffs, &grid)?;
    let garding = estimate_garding(&op)?;
    let rh = coincide_core::ResolventHandle::new(&op, &garding, h)?;
    let g = |u: &[f64], out: &mut [f64]| {
        let v = VectorField::from_vec(grid, m, u.to_vec())
            .and_then(|w| coincide_core::solver::phi_step(&rh, &field, &forcing, &w, 1.0));
        match v {
            Ok(v) => {
                for (o, (a, b)) in out.iter_mut().zip(u.iter().zip(v.data())) {
                    *o = a - b;
                }
            }
            Err(_) => out.fill(f64::NAN),
        }
    };
    Ok(coincide_core::solver::brouwer_degree_small(&g, lo, hi, density)?)
}
