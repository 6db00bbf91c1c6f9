//! Constrained coincidences `Su = F(u)`, `u ∈ K`, through fixed points of the
//! projected resolvent map `φ_h(u) = J_h(r(u + h t F(u)))`, continued in the
//! homotopy parameter `t` from `0` to `1` and over a decreasing list of steps `h`.
//!
//! If `v = φ_h(u)` and `w = u + h t F(u)`, then
//! `h (Su − tF(u)) = (r(w) − w) + (I + hS)(u − v)`, so every iterate carries
//! the residual bound `(L/h)(d(w, K) + ‖φ_h(u) − u‖ (1 + h‖S‖))`.

pub mod degree;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::Serialize;

use crate::constraint::ConstraintField;
use crate::error::{Error, Result};
use crate::grid::VectorField;
use crate::math;
use crate::nonlinearity::{audit_tangency, superpose, ForcingTerm, TangencyReport};
use crate::operator::{AssembledOperator, GardingEstimate};
use crate::par;
use crate::resolvent::{verify_resolvent_invariance, InvarianceReport, ResolventHandle};

pub use degree::{brouwer_degree_small, winding_number, DegreeReport, ZeroInfo};

/// Iteration parameters.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverConfig {
    /// Explicit decreasing steps; when `None`, `h_factors` times
    /// `1 / max(λ_min(Sym S), ω)` is used.
    pub h_schedule: Option<Vec<f64>>,
    pub h_factors: Vec<f64>,
    /// Iteration cap per `(t, h)` block.
    pub max_iters: usize,
    /// A block stops once `‖φ_h(u) − u‖ ≤ tol_fp (1 + ‖u‖)`.
    pub tol_fp: f64,
    /// Required `‖Su − F(u)‖_{L²}` for convergence.
    pub tol_res: f64,
    /// Initial damping `λ ∈ (0, 1]` in `u ← (1 − λ)u + λ φ_h(u)`.
    pub damping: f64,
    /// Double `λ` (up to 1) after three consecutive gap decreases, halve it
    /// after an increase.
    pub adaptive_damping: bool,
    /// Homotopy levels `t = j / homotopy_steps`, `j = 1..=homotopy_steps`.
    pub homotopy_steps: usize,
    /// Lipschitz constant of the retraction (1 for metric projections).
    pub l_retract: f64,
    pub override_invariance: bool,
    pub override_tangency: bool,
    pub invariance_samples: usize,
    pub tangency_samples: usize,
    pub seed: u64,
    /// Observer cadence in iterations (0 disables it).
    pub report_every: usize,
    /// Divergence when `‖u‖ > divergence_factor (1 + ‖m‖)`.
    pub divergence_factor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            h_schedule: None,
            h_factors: vec![0.2, 0.1, 0.05, 0.02],
            max_iters: 5000,
            tol_fp: 1e-13,
            tol_res: 1e-8,
            damping: 0.5,
            adaptive_damping: true,
            homotopy_steps: 1,
            l_retract: 1.0,
            override_invariance: false,
            override_tangency: false,
            invariance_samples: 16,
            tangency_samples: 256,
            seed: 0,
            report_every: 0,
            divergence_factor: 1e3,
        }
    }
}

impl SolverConfig {
    /// Checks tolerances and damping, and returns the step list to use.
    pub fn steps(&self, garding: &GardingEstimate) -> Result<Vec<f64>> {
        if !(self.tol_fp > 0.0 && self.tol_res > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidArgument(format!("damping {} outside (0, 1]", self.damping)));
        }
        if self.homotopy_steps == 0 {
            return Err(Error::InvalidArgument("homotopy_steps must be at least 1".into()));
        }
        let hs = match &self.h_schedule {
            Some(h) => h.clone(),
            None => {
                let scale = 1.0 / garding.lambda_sym.max(garding.omega).max(1e-12);
                self.h_factors.iter().map(|f| f * scale).collect()
            }
        };
        if hs.is_empty() {
            return Err(Error::InvalidArgument("empty step schedule".into()));
        }
        for w in hs.windows(2) {
            if !(w[1] < w[0]) {
                return Err(Error::InvalidArgument("step schedule must be strictly decreasing".into()));
            }
        }
        for &h in &hs {
            if !(h > 0.0) || !(h * garding.omega < 1.0) {
                return Err(Error::InadmissibleStep { h, product: h * garding.omega });
            }
        }
        Ok(hs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    /// An iteration cap was hit before the residual tolerance.
    MaxIters,
    /// Every block reached a fixed point but the residual stayed above
    /// `tol_res` (the projection is active at the fixed points).
    Stalled,
    InvarianceRefused,
    TangencyRefused,
    Diverged,
}

/// One `(t, h)` block of iterations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockReport {
    pub t: f64,
    pub h: f64,
    pub iterations: usize,
    pub gap: f64,
    /// `‖Su − tF(u)‖_{L²}` at the last iterate.
    pub residual: f64,
    /// `(L/h)(d(u + htF(u), K) + gap (1 + h‖S‖))` at the last iterate.
    pub certificate: f64,
    /// `L d(u + htF(u), K) / h`.
    pub projection_term: f64,
    /// Largest nodewise distance from `K` of the last iterate.
    pub violation: f64,
    pub damping: f64,
    pub fixed_point: bool,
}

/// Diagnostics passed to an observer every `report_every` iterations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterateInfo {
    pub t: f64,
    pub h: f64,
    pub iteration: usize,
    pub gap: f64,
    pub residual: f64,
    pub certificate: f64,
    pub certificate_holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub termination: Termination,
    pub blocks: Vec<BlockReport>,
    /// `‖Su − F(u)‖_{L²}` of the returned field.
    pub residual: f64,
    /// The residual tolerance of the configuration.
    pub tol_res: f64,
    /// Largest nodewise distance from `K` over all iterates.
    pub max_iterate_violation: f64,
    /// Tolerance `1e-8 (1 + ‖u‖_∞)` used for the violation test.
    pub tol_inv: f64,
    /// The residual bound held at every checked iterate.
    pub certificate_holds: bool,
    pub total_iterations: usize,
    pub invariance: Vec<InvarianceReport>,
    pub tangency: Option<TangencyReport>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub solution: VectorField,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

/// `φ_h(u) = J_h(r(u + h t F(u)))`.
pub fn phi_step(rh: &ResolventHandle<'_>, field: &ConstraintField, f: &ForcingTerm, u: &VectorField, t: f64) -> Result<VectorField> {
    let mut w = superpose(f, u)?;
    w.scale(rh.step() * t);
    w.axpy(1.0, u)?;
    rh.apply(&field.project_field(&w)?)
}

/// `‖Su − tF(u)‖_{L²}`.
pub fn residual(op: &AssembledOperator, f: &ForcingTerm, u: &VectorField, t: f64) -> Result<f64> {
    let mut r = op.apply(u)?;
    r.axpy(-t, &superpose(f, u)?)?;
    Ok(r.l2_norm())
}

/// Discrete `L²` norm of the nodewise distance of `w` from `K`.
fn distance_l2(field: &ConstraintField, w: &VectorField) -> Result<f64> {
    let g = *w.grid();
    let d = g.dim();
    let dist = par::map_range(w.nodes(), |i| {
        let p = g.point(i);
        field.distance(&p[..d], w.node(i))
    });
    let mut s = 0.0;
    for r in dist {
        let r = r?;
        s += r * r;
    }
    Ok(math::sqrt(s * g.cell_volume()))
}

struct Iterate {
    gap: f64,
    residual: f64,
    certificate: f64,
    projection_term: f64,
}

/// Evaluates `φ_h(u)` with the quantities of the residual bound at `u`.
fn evaluate(
    op: &AssembledOperator,
    rh: &ResolventHandle<'_>,
    field: &ConstraintField,
    f: &ForcingTerm,
    u: &VectorField,
    t: f64,
    l: f64,
) -> Result<(VectorField, Iterate)> {
    let h = rh.step();
    let fu = superpose(f, u)?;
    let mut w = fu.clone();
    w.scale(h * t);
    w.axpy(1.0, u)?;
    let dw = distance_l2(field, &w)?;
    let v = rh.apply(&field.project_field(&w)?)?;
    let gap = v.sub(u)?.l2_norm();
    let mut r = op.apply(u)?;
    r.axpy(-t, &fu)?;
    let residual = r.l2_norm();
    let projection_term = l * dw / h;
    let certificate = (l / h) * (dw + gap * (1.0 + h * op.norm_bound()));
    Ok((v, Iterate { gap, residual, certificate, projection_term }))
}

/// Runs the continuation without an observer.
pub fn solve(
    op: &AssembledOperator,
    garding: &GardingEstimate,
    field: &ConstraintField,
    f: &ForcingTerm,
    cfg: &SolverConfig,
    u0: &VectorField,
) -> Result<SolveReport> {
    solve_with_observer(op, garding, field, f, cfg, u0, &mut |_, _| {})
}

/// Runs the continuation. Refusals and divergence are reported through
/// [`SolveReport::termination`]; errors are reserved for failing linear
/// algebra, projections or forcing evaluations.
pub fn solve_with_observer(
    op: &AssembledOperator,
    garding: &GardingEstimate,
    field: &ConstraintField,
    f: &ForcingTerm,
    cfg: &SolverConfig,
    u0: &VectorField,
    observer: &mut dyn FnMut(&IterateInfo, &VectorField),
) -> Result<SolveReport> {
    if u0.grid() != op.grid() || u0.components() != op.components() || field.components() != op.components() || f.components() != op.components() {
        return Err(Error::GridMismatch);
    }
    let hs = cfg.steps(garding)?;
    let grid = *op.grid();
    let mut report = SolveReport {
        termination: Termination::Converged,
        blocks: Vec::new(),
        residual: f64::NAN,
        tol_res: cfg.tol_res,
        max_iterate_violation: 0.0,
        tol_inv: 0.0,
        certificate_holds: true,
        total_iterations: 0,
        invariance: Vec::new(),
        tangency: None,
        notes: Vec::new(),
        solution: u0.clone(),
    };

    let tangency = audit_tangency(f, field, &grid, cfg.tangency_samples, cfg.seed)?;
    let tangent = tangency.pass;
    report.tangency = Some(tangency);
    if !tangent {
        if cfg.override_tangency {
            report.notes.push("tangency audit failed; continuing by override".into());
        } else {
            report.termination = Termination::TangencyRefused;
            return Ok(report);
        }
    }
    if cfg.invariance_samples > 0 {
        let inv = verify_resolvent_invariance(op, garding, field, cfg.invariance_samples, &hs, cfg.seed)?;
        let pass = inv.pass;
        report.invariance.push(inv);
        if !pass {
            if cfg.override_invariance {
                report.notes.push("resolvent invariance not verified; continuing by override".into());
            } else {
                report.termination = Termination::InvarianceRefused;
                return Ok(report);
            }
        }
    } else if !cfg.override_invariance {
        report.termination = Termination::InvarianceRefused;
        report.notes.push("no invariance samples requested and no override given".into());
        return Ok(report);
    }

    let mut u = field.project_field(u0)?;
    let envelope = field.envelope_l2(&grid);
    let blowup = cfg.divergence_factor * (1.0 + envelope);
    let r0 = residual(op, f, &u, 1.0)?;
    if r0 == 0.0 {
        report.residual = 0.0;
        report.tol_inv = 1e-8 * (1.0 + u.sup_norm());
        report.max_iterate_violation = field.max_violation(&u)?.0;
        report.notes.push("initial field is an exact coincidence".into());
        report.solution = u;
        return Ok(report);
    }

    let handles: Vec<ResolventHandle<'_>> = hs.iter().map(|&h| ResolventHandle::new(op, garding, h)).collect::<Result<_>>()?;
    let mut hit_cap = false;
    let mut max_violation = field.max_violation(&u)?.0;
    'outer: for j in 1..=cfg.homotopy_steps {
        let t = j as f64 / cfg.homotopy_steps as f64;
        let active: &[ResolventHandle<'_>] = if j < cfg.homotopy_steps { &handles[..1] } else { &handles };
        for rh in active {
            let h = rh.step();
            let mut lambda = cfg.damping;
            let mut prev_gap = f64::INFINITY;
            let mut decreases = 0;
            let mut iterations = 0;
            let mut fixed_point = false;
            let last: Iterate;
            loop {
                let (v, it) = evaluate(op, rh, field, f, &u, t, cfg.l_retract)?;
                let holds = it.residual <= it.certificate * (1.0 + 1e-9) + 1e-14 * (1.0 + it.certificate);
                report.certificate_holds &= holds;
                let info = IterateInfo { t, h, iteration: iterations, gap: it.gap, residual: it.residual, certificate: it.certificate, certificate_holds: holds };
                if cfg.report_every > 0 && iterations % cfg.report_every == 0 {
                    observer(&info, &u);
                }
                if it.gap <= cfg.tol_fp * (1.0 + u.l2_norm()) {
                    fixed_point = true;
                    last = it;
                    break;
                }
                if iterations >= cfg.max_iters {
                    hit_cap = true;
                    last = it;
                    break;
                }
                if cfg.adaptive_damping {
                    if it.gap < prev_gap {
                        decreases += 1;
                        if decreases >= 3 && lambda < 1.0 {
                            lambda = (2.0 * lambda).min(1.0);
                            decreases = 0;
                        }
                    } else {
                        lambda = (0.5 * lambda).max(1.0 / 64.0);
                        decreases = 0;
                    }
                }
                prev_gap = it.gap;
                let mut next = u.clone();
                next.scale(1.0 - lambda);
                next.axpy(lambda, &v)?;
                u = next;
                iterations += 1;
                report.total_iterations += 1;
                let (viol, _) = field.max_violation(&u)?;
                max_violation = max_violation.max(viol);
                let norm = u.l2_norm();
                if !u.all_finite() || norm > blowup {
                    report.termination = Termination::Diverged;
                    report.notes.push(format!("iterate norm {norm:e} exceeds {blowup:e} at t = {t}, h = {h:e}"));
                    report.blocks.push(BlockReport {
                        t,
                        h,
                        iterations,
                        gap: it.gap,
                        residual: f64::NAN,
                        certificate: f64::NAN,
                        projection_term: f64::NAN,
                        violation: viol,
                        damping: lambda,
                        fixed_point: false,
                    });
                    break 'outer;
                }
            }
            let (violation, _) = field.max_violation(&u)?;
            report.blocks.push(BlockReport {
                t,
                h,
                iterations,
                gap: last.gap,
                residual: last.residual,
                certificate: last.certificate,
                projection_term: last.projection_term,
                violation,
                damping: lambda,
                fixed_point,
            });
        }
    }

    report.max_iterate_violation = max_violation;
    report.tol_inv = 1e-8 * (1.0 + u.sup_norm());
    if report.termination != Termination::Diverged {
        report.residual = residual(op, f, &u, 1.0)?;
        let inside = field.max_violation(&u)?.0 <= report.tol_inv;
        report.termination = if report.residual <= cfg.tol_res && inside {
            Termination::Converged
        } else if hit_cap {
            Termination::MaxIters
        } else {
            Termination::Stalled
        };
    }
    report.solution = u;
    Ok(report)
}
