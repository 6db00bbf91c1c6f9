//! Expanding-box truncation for problems on all of `R^N` with constant
//! second-order coefficients: solve on `[-R_n, R_n]^N` at a fixed spacing,
//! extend each solution by zero as the warm start of the next level, and watch
//! tail norms outside `|x|_∞ ≥ R` and successive `H¹` differences.
//!
//! Also provides the scaled Sobolev and Ehrling–Browder quotients whose
//! uniformity in `R` the truncation argument relies on.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use serde::Serialize;

use crate::constraint::ConstraintField;
use crate::error::{Error, Result};
use crate::func::ScalarFn;
use crate::grid::{GridDomain, VectorField};
use crate::math;
use crate::nonlinearity::ForcingTerm;
use crate::operator::{assemble, estimate_garding, OperatorCoefficients};
use crate::solver::{solve, SolveReport, SolverConfig, Termination};

/// Square-integrable envelope `m` with known tail integrals
/// `∫_{|x|_∞ ≥ R} m²`.
#[derive(Clone)]
pub enum Envelope {
    /// `A Π_i e^{-a|x_i|}`.
    SeparableExp { amplitude: f64, rate: f64 },
    /// `A e^{-|x|² / (2w²)}`.
    Gaussian { amplitude: f64, width: f64 },
    /// User supplied value and tail integral.
    Custom { value: ScalarFn, tail_l2_sq: Arc<dyn Fn(f64) -> f64 + Send + Sync> },
}

impl core::fmt::Debug for Envelope {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Self::SeparableExp { amplitude, rate } => write!(f, "SeparableExp({amplitude}, {rate})"),
            Self::Gaussian { amplitude, width } => write!(f, "Gaussian({amplitude}, {width})"),
            Self::Custom { .. } => f.write_str("Custom"),
        }
    }
}

impl Envelope {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Self::SeparableExp { amplitude, rate } => amplitude * math::exp(-rate * x.iter().map(|v| math::abs(*v)).sum::<f64>()),
            Self::Gaussian { amplitude, width } => {
                amplitude * math::exp(-x.iter().map(|v| v * v).sum::<f64>() / (2.0 * width * width))
            }
            Self::Custom { value, .. } => value(x),
        }
    }

    /// `∫_{|x|_∞ ≥ R} m(x)² dx` over `R^dim`.
    pub fn tail_l2_sq(&self, dim: usize, r: f64) -> f64 {
        let n = dim as i32;
        match self {
            Self::SeparableExp { amplitude, rate } => {
                let full = 1.0 / rate;
                let inner = -math::expm1(-2.0 * rate * r) / rate;
                amplitude * amplitude * (ipow(full, n) - ipow(inner, n))
            }
            Self::Gaussian { amplitude, width } => {
                let full = width * math::sqrt(core::f64::consts::PI);
                let inner = full * math::erf(r / width);
                amplitude * amplitude * (ipow(full, n) - ipow(inner, n))
            }
            Self::Custom { tail_l2_sq, .. } => tail_l2_sq(r),
        }
    }
}

fn ipow(x: f64, n: i32) -> f64 {
    (0..n).fold(1.0, |a, _| a * x)
}

/// Smooth step `φ`: `0` on `t ≤ 1`, `1` on `t ≥ 4`.
pub fn smooth_step(t: f64) -> f64 {
    let bump = |s: f64| if s > 0.0 { math::exp(-1.0 / s) } else { 0.0 };
    let s = (t - 1.0) / 3.0;
    let a = bump(s);
    let b = bump(1.0 - s);
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

/// `φ_R(x) = φ(R^{-2}|x|_∞²)`, switching on over `R ≤ |x|_∞ ≤ 2R`.
pub fn cutoff(x: &[f64], r: f64) -> f64 {
    let n = x.iter().fold(0.0f64, |m, v| m.max(math::abs(*v)));
    smooth_step(n * n / (r * r))
}

/// A whole-space problem.
#[derive(Clone)]
pub struct Problem {
    pub coeffs: OperatorCoefficients,
    pub constraint: ConstraintField,
    pub forcing: ForcingTerm,
    pub envelope: Envelope,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruncationSchedule {
    /// Increasing half-widths `R_1 < R_2 < …`, each a multiple of `spacing/2`
    /// apart from the previous one.
    pub radii: Vec<f64>,
    pub spacing: f64,
    /// Radii at which tails are reported.
    pub probes: Vec<f64>,
    pub tol_cauchy: f64,
}

impl TruncationSchedule {
    /// `R_n = n` for `n = 1..=levels`.
    pub fn unit_radii(levels: usize, spacing: f64, probes: Vec<f64>, tol_cauchy: f64) -> Self {
        Self { radii: (1..=levels).map(|n| n as f64).collect(), spacing, probes, tol_cauchy }
    }

    fn validate(&self) -> Result<()> {
        if self.radii.is_empty() {
            return Err(Error::InvalidArgument("no truncation radii given".into()));
        }
        for w in self.radii.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidArgument("radii must increase".into()));
            }
        }
        if !(self.tol_cauchy > 0.0) {
            return Err(Error::InvalidArgument("tol_cauchy must be positive".into()));
        }
        Ok(())
    }
}

/// `(‖u‖_{L²}, |u|_{1,2})` over `|x|_∞ ≥ R`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailRow {
    pub probe: f64,
    pub l2_tail: f64,
    pub h1_tail: f64,
    /// `(∫ φ_R |∂u|²)^{1/2}` with the smooth cutoff.
    pub h1_cutoff: f64,
    /// `(∫_{|x|_∞ ≥ R} m²)^{1/2}`.
    pub envelope_tail: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelReport {
    pub level: usize,
    pub radius: f64,
    pub nodes: usize,
    pub l2_norm: f64,
    pub h1_norm: f64,
    pub h2_seminorm: f64,
    pub tails: Vec<TailRow>,
    /// `‖u_n − u_{n−1}‖_{H¹}` with `u_{n−1}` extended by zero.
    pub diff_h1: Option<f64>,
    /// `max_x (|u_n(x)| − m(x))`; nonpositive when the envelope holds.
    pub envelope_excess: f64,
    pub termination: Termination,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailReport {
    pub levels: Vec<LevelReport>,
    pub terminated_by_cauchy: bool,
    /// `h2_{n+1} ≤ 1.1 h2_n` along the level sequence.
    pub h2_bounded: bool,
    pub notes: Vec<String>,
}

pub struct TruncationOutcome {
    pub solution: VectorField,
    pub tail: TailReport,
    pub solves: Vec<SolveReport>,
}

/// Sums over nodes with `|x|_∞ ≥ R`; nodes with `|x|_∞ = R` get weight ½.
fn tail_weight(x: &[f64], r: f64, dx: f64) -> f64 {
    let n = x.iter().fold(0.0f64, |m, v| m.max(math::abs(*v)));
    let eps = 1e-9 * dx;
    if n > r + eps {
        1.0
    } else if n >= r - eps {
        0.5
    } else {
        0.0
    }
}

/// Discrete `(‖u‖_{L²(|x|_∞ ≥ R)}, |u|_{1,2,(|x|_∞ ≥ R)})` with centred
/// gradients, scaled by `Δx^N`.
pub fn tail_seminorm(u: &VectorField, r: f64) -> (f64, f64) {
    let grid = u.grid();
    let d = grid.dim();
    let m = u.components();
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    let mut g = vec![0.0; m * d];
    for node in 0..u.nodes() {
        let p = grid.point(node);
        let w = tail_weight(&p[..d], r, grid.spacing());
        if w == 0.0 {
            continue;
        }
        l2 += w * u.node(node).iter().map(|v| v * v).sum::<f64>();
        u.gradient_at(node, &mut g);
        h1 += w * g.iter().map(|v| v * v).sum::<f64>();
    }
    let vol = grid.cell_volume();
    (math::sqrt(l2 * vol), math::sqrt(h1 * vol))
}

/// `(∫ φ_R |∂u|²)^{1/2}`.
pub fn cutoff_h1(u: &VectorField, r: f64) -> f64 {
    let grid = u.grid();
    let d = grid.dim();
    let mut g = vec![0.0; u.components() * d];
    let mut s = 0.0;
    for node in 0..u.nodes() {
        let p = grid.point(node);
        let w = cutoff(&p[..d], r);
        if w == 0.0 {
            continue;
        }
        u.gradient_at(node, &mut g);
        s += w * g.iter().map(|v| v * v).sum::<f64>();
    }
    math::sqrt(s * grid.cell_volume())
}

fn envelope_excess(u: &VectorField, env: &Envelope) -> f64 {
    let grid = u.grid();
    let d = grid.dim();
    (0..u.nodes()).fold(f64::NEG_INFINITY, |m, node| {
        let p = grid.point(node);
        m.max(math::norm(u.node(node)) - env.value(&p[..d]))
    })
}

/// Solves level after level until `‖u_{n+1} − u_n‖_{H¹} ≤ tol_cauchy` or the
/// radii are exhausted. Fails with [`Error::TailStagnation`] when the
/// successive differences do not decrease for three consecutive levels.
pub fn run_truncation(problem: &Problem, schedule: &TruncationSchedule, cfg: &SolverConfig) -> Result<TruncationOutcome> {
    schedule.validate()?;
    if !problem.coeffs.constant_a() {
        return Err(Error::InvalidArgument("truncation requires constant second-order coefficients".into()));
    }
    let dim = problem.coeffs.dim();
    let m = problem.coeffs.components();
    let mut levels: Vec<LevelReport> = Vec::new();
    let mut solves = Vec::new();
    let mut prev: Option<VectorField> = None;
    let mut by_cauchy = false;
    let mut non_decrease = 0;
    for (idx, &radius) in schedule.radii.iter().enumerate() {
        let level = idx + 1;
        let fail = |reason: String| Error::LevelSolveFailed { level, reason };
        let grid = GridDomain::with_spacing(dim, radius, schedule.spacing).map_err(|e| fail(format!("{e}")))?;
        let op = assemble(&problem.coeffs, &grid).map_err(|e| fail(format!("{e}")))?;
        let garding = estimate_garding(&op).map_err(|e| fail(format!("{e}")))?;
        let start = match &prev {
            Some(u) => {
                let ext = u.grid().extend_by_zero(u, &grid).map_err(|e| fail(format!("{e}")))?;
                problem.constraint.project_field(&ext)?
            }
            None => VectorField::zeros(grid, m),
        };
        let report = solve(&op, &garding, &problem.constraint, &problem.forcing, cfg, &start).map_err(|e| fail(format!("{e}")))?;
        if !report.converged() {
            return Err(fail(format!("solver terminated with {:?}", report.termination)));
        }
        let u = report.solution.clone();
        let diff_h1 = match &prev {
            Some(p) => {
                let ext = p.grid().extend_by_zero(p, &grid)?;
                Some(u.sub(&ext)?.h1_norm())
            }
            None => None,
        };
        let tails = schedule
            .probes
            .iter()
            .filter(|&&r| r < radius)
            .map(|&r| {
                let (l2_tail, h1_tail) = tail_seminorm(&u, r);
                TailRow { probe: r, l2_tail, h1_tail, h1_cutoff: cutoff_h1(&u, r), envelope_tail: math::sqrt(problem.envelope.tail_l2_sq(dim, r)) }
            })
            .collect();
        let lr = LevelReport {
            level,
            radius,
            nodes: grid.node_count(),
            l2_norm: u.l2_norm(),
            h1_norm: u.h1_norm(),
            h2_seminorm: math::sqrt(u.h2_seminorm_sq()),
            tails,
            diff_h1,
            envelope_excess: envelope_excess(&u, &problem.envelope),
            termination: report.termination,
            iterations: report.total_iterations,
            residual: report.residual,
        };
        if let (Some(d), Some(prev_d)) = (diff_h1, levels.last().and_then(|l| l.diff_h1)) {
            if d >= prev_d {
                non_decrease += 1;
            } else {
                non_decrease = 0;
            }
        }
        levels.push(lr);
        solves.push(report);
        prev = Some(u);
        if non_decrease >= 3 {
            return Err(Error::TailStagnation { level });
        }
        if diff_h1.is_some_and(|d| d <= schedule.tol_cauchy) {
            by_cauchy = true;
            break;
        }
    }
    let h2_bounded = levels.windows(2).all(|w| w[1].h2_seminorm <= 1.1 * w[0].h2_seminorm + 1e-14);
    let mut notes = Vec::new();
    notes.push(format!("stopping rule: successive H1 difference <= {:e}", schedule.tol_cauchy));
    let solution = prev.expect("at least one level");
    Ok(TruncationOutcome { solution, tail: TailReport { levels, terminated_by_cauchy: by_cauchy, h2_bounded, notes }, solves })
}

/// Quotient with and without the `R`-dependent weight on the lower-order term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RatioPair {
    pub scaled: f64,
    pub unscaled: f64,
}

/// Both sides of the scaled inequalities for one field.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditRecord {
    pub radius: f64,
    pub dim: usize,
    pub l2: f64,
    pub h1_seminorm: f64,
    pub h2_seminorm: f64,
    /// `‖v‖_{L^{2*}}` for `N ≥ 3`.
    pub lp_star: Option<f64>,
    /// `‖v‖_{L^{2*}} / (|v|²_{1,2} + R^{-2}‖v‖²)^{1/2}` (scaled) and with
    /// `R^{-2}` replaced by `1`; `N ≥ 3` only.
    pub sobolev: Option<RatioPair>,
    /// `|v|²_{1,2} / (‖v‖ |v|_{2,2} + R^{-2}‖v‖²)` (scaled) and with `R^{-2}`
    /// replaced by `1`.
    pub ehrling_browder: RatioPair,
}

fn quotient(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

/// Evaluates the Sobolev (`p = 2`) and Ehrling–Browder quotients on `u`
/// regarded as a function on a box of half-width `r`.
pub fn scaled_inequality_audit(u: &VectorField, r: f64) -> AuditRecord {
    let grid = u.grid();
    let d = grid.dim();
    let vol = grid.cell_volume();
    let l2_sq = u.l2_norm_sq();
    let l2 = math::sqrt(l2_sq);
    let h1_sq = u.h1_seminorm_sq();
    let h2 = math::sqrt(u.h2_seminorm_sq());
    let w = 1.0 / (r * r);
    let (lp_star, sobolev) = if d >= 3 {
        let ps = 2.0 * d as f64 / (d as f64 - 2.0);
        let s: f64 = (0..u.nodes()).map(|i| math::pow(math::norm(u.node(i)), ps)).sum();
        let lp = math::pow(s * vol, 1.0 / ps);
        (
            Some(lp),
            Some(RatioPair { scaled: quotient(lp, math::sqrt(h1_sq + w * l2_sq)), unscaled: quotient(lp, math::sqrt(h1_sq + l2_sq)) }),
        )
    } else {
        (None, None)
    };
    let ehrling_browder = RatioPair { scaled: quotient(h1_sq, l2 * h2 + w * l2_sq), unscaled: quotient(h1_sq, l2 * h2 + l2_sq) };
    AuditRecord { radius: r, dim: d, l2, h1_seminorm: math::sqrt(h1_sq), h2_seminorm: h2, lp_star, sobolev, ehrling_browder }
}
