//! Forcing terms `f(x, u, ξ)`, their superposition on grid functions, sampled
//! growth and tangency audits, and the exponent arithmetic of the a-priori
//! estimates.
//!
//! Gradients are passed as `xi[k * N + i] = ∂_i u_k`.

pub mod exponents;

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use serde::Serialize;

use crate::constraint::{default_tol_active, ConstraintField, TangentQuery};
use crate::error::{Error, Result};
use crate::func::{constant_scalar, ScalarFn, VectorFn};
use crate::grid::{GridDomain, VectorField};
use crate::linalg::Mat;
use crate::math;
use crate::par;
use crate::rng::SampleRng;

pub use exponents::{check_admissible, compute_apriori_exponents, q_bound, s_bound, AprioriExponents};

/// `(x, u, ξ, out)`; writes `f(x, u, ξ)` into `out`.
pub type ForcingFn = Arc<dyn Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync>;

/// A forcing term with declared growth `|f| ≤ β(x) + c(|u|^s + |ξ|^q)`.
#[derive(Clone)]
pub struct ForcingTerm {
    name: String,
    dim: usize,
    m: usize,
    s: f64,
    q: f64,
    beta: ScalarFn,
    c: f64,
    eval: ForcingFn,
}

impl core::fmt::Debug for ForcingTerm {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ForcingTerm")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("m", &self.m)
            .field("s", &self.s)
            .field("q", &self.q)
            .field("c", &self.c)
            .finish()
    }
}

impl ForcingTerm {
    /// Checks `1 ≤ s < (N+4)/N`, `1 ≤ q < (N+4)/(N+2)` and `c > 0`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        m: usize,
        s: f64,
        q: f64,
        beta: ScalarFn,
        c: f64,
        eval: ForcingFn,
    ) -> Result<Self> {
        exponents::check_admissible(s, q, dim)?;
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidArgument(format!("growth constant c = {c} must be positive")));
        }
        if m == 0 {
            return Err(Error::InvalidArgument("forcing must have at least one component".into()));
        }
        Ok(Self { name: name.into(), dim, m, s, q, beta, c, eval })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> usize {
        self.m
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn beta(&self, x: &[f64]) -> f64 {
        (self.beta)(x)
    }

    pub fn eval_into(&self, x: &[f64], u: &[f64], xi: &[f64], out: &mut [f64]) {
        (self.eval)(x, u, xi, out)
    }

    pub fn eval(&self, x: &[f64], u: &[f64], xi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        self.eval_into(x, u, xi, &mut out);
        out
    }

    /// Declared bound `β(x) + c(|u|^s + |ξ|^q)`.
    pub fn growth_bound(&self, x: &[f64], u: &[f64], xi: &[f64]) -> f64 {
        self.beta(x) + self.c * (math::pow(math::norm(u), self.s) + math::pow(math::norm(xi), self.q))
    }

    /// `f ≡ 0`.
    pub fn zero(dim: usize, m: usize) -> Self {
        Self::constant(dim, &vec![0.0; m]).expect("zero forcing is admissible")
    }

    /// `f ≡ v`, independent of `u` and `ξ`.
    pub fn constant(dim: usize, v: &[f64]) -> Result<Self> {
        let v = v.to_vec();
        let norm = math::norm(&v);
        let m = v.len();
        Self::new("constant", dim, m, 1.0, 1.0, constant_scalar(norm), 1.0, Arc::new(move |_, _, _, out| out.copy_from_slice(&v)))
    }

    /// `f_k = μ u_k (1 − u_k)`, `s = 2`: `|f| ≤ μ/2 + (3μ/2)|u|²`.
    pub fn logistic(dim: usize, m: usize, mu: f64) -> Result<Self> {
        let c = 1.5 * math::abs(mu);
        Self::new("logistic", dim, m, 2.0, 1.0, constant_scalar(0.5 * math::abs(mu)), c.max(f64::MIN_POSITIVE), Arc::new(move |_, u, _, out| {
            for (o, &v) in out.iter_mut().zip(u) {
                *o = mu * v * (1.0 - v);
            }
        }))
    }

    /// Lotka–Volterra interactions with saturating response,
    /// `f_k = r_k u_k (1 − Σ_l a_{kl} u_l / (1 + |u_l|))`; linear growth.
    pub fn lotka_volterra(dim: usize, rates: &[f64], interaction: Mat) -> Result<Self> {
        let m = rates.len();
        if interaction.rows() != m || interaction.cols() != m {
            return Err(Error::InvalidArgument("interaction matrix must be M x M".into()));
        }
        let rates = rates.to_vec();
        let rmax = rates.iter().fold(0.0f64, |a, r| a.max(math::abs(*r)));
        let c = rmax * (1.0 + interaction.frobenius());
        Self::new("lotka_volterra", dim, m, 1.0, 1.0, constant_scalar(0.0), c.max(f64::MIN_POSITIVE), Arc::new(move |_, u, _, out| {
            for k in 0..out.len() {
                let mut s = 0.0;
                for (l, &ul) in u.iter().enumerate() {
                    s += interaction[(k, l)] * ul / (1.0 + math::abs(ul));
                }
                out[k] = rates[k] * u[k] * (1.0 - s);
            }
        }))
    }

    /// `f = L u + g`.
    pub fn linear(dim: usize, l: Mat, g: &[f64]) -> Result<Self> {
        if l.rows() != g.len() || l.cols() != g.len() {
            return Err(Error::InvalidArgument("linear forcing needs an M x M matrix and M vector".into()));
        }
        let g = g.to_vec();
        let c = l.frobenius().max(f64::MIN_POSITIVE);
        let beta = math::norm(&g);
        let m = g.len();
        Self::new("linear", dim, m, 1.0, 1.0, constant_scalar(beta), c, Arc::new(move |_, u, _, out| {
            l.mul_vec_into(u, out);
            for (o, gi) in out.iter_mut().zip(&g) {
                *o += gi;
            }
        }))
    }

    /// Source relaxed towards a target state, `f_k = g(x)(τ_k − u_k)`. A
    /// nonnegative `g` makes this tangent to rectangles with `τ` as a vertex.
    pub fn relaxed_source(dim: usize, g: ScalarFn, target: &[f64], g_sup: f64) -> Result<Self> {
        let target = target.to_vec();
        let m = target.len();
        let tn = math::norm(&target);
        let c = g_sup.max(f64::MIN_POSITIVE);
        Self::new("relaxed", dim, m, 1.0, 1.0, constant_scalar(g_sup * tn), c, Arc::new(move |x, u, _, out| {
            let gx = g(x);
            for k in 0..out.len() {
                out[k] = gx * (target[k] - u[k]);
            }
        }))
    }

    /// `f(x) = P[u*](x)` supplied directly, so that `u*` solves `P[u] = f`.
    pub fn manufactured(dim: usize, m: usize, source: VectorFn, source_sup: f64) -> Result<Self> {
        Self::new("manufactured", dim, m, 1.0, 1.0, constant_scalar(source_sup), 1.0, Arc::new(move |x, _, _, out| source(x, out)))
    }
}

/// `F(u)(x) = f(x, u(x), ∂u(x))` at every interior node, with centred
/// differences (zero boundary values) for `∂u`.
pub fn superpose(f: &ForcingTerm, u: &VectorField) -> Result<VectorField> {
    let grid = *u.grid();
    let d = grid.dim();
    let m = u.components();
    if f.components() != m || f.dim() != d {
        return Err(Error::GridMismatch);
    }
    let rows = par::map_range(u.nodes(), |node| -> Result<Vec<f64>> {
        let p = grid.point(node);
        let mut xi = vec![0.0; m * d];
        u.gradient_at(node, &mut xi);
        let out = f.eval(&p[..d], u.node(node), &xi);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteForcing { node });
        }
        Ok(out)
    });
    let mut data = Vec::with_capacity(u.data().len());
    for r in rows {
        data.extend(r?);
    }
    VectorField::from_vec(grid, m, data)
}

/// A sampled `(x, u, ξ)` and the value of `f` there.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ForcingWitness {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub xi: Vec<f64>,
    pub f: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthReport {
    pub samples: usize,
    /// Largest `|f| / bound`.
    pub worst_ratio: f64,
    pub witness: Option<ForcingWitness>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TangencyReport {
    pub samples: usize,
    pub violations: usize,
    pub witness: Option<ForcingWitness>,
    pub pass: bool,
}

/// Random grid node and a point of `K(x)`; `outside` pushes the raw sample far
/// enough out that the projection lands on `∂K(x)`.
fn sample_state(field: &ConstraintField, grid: &GridDomain, rng: &mut SampleRng, outside: bool) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = grid.dim();
    let m = field.components();
    let node = rng.below(grid.node_count());
    let p = grid.point(node);
    let x = p[..d].to_vec();
    let (c, s) = field.reference_point(&x)?;
    let mut dir = vec![0.0; m];
    rng.unit_vector(&mut dir);
    let r = if outside { s * (1.5 + 2.0 * rng.uniform()) } else { 2.0 * s * rng.uniform() };
    let target: Vec<f64> = c.iter().zip(&dir).map(|(ci, di)| ci + r * di).collect();
    let u = field.project(&x, &target)?;
    Ok((x, u))
}

/// Checks `|f(x,u,ξ)| ≤ (β(x) + c(|u|^s + |ξ|^q))(1 + 1e-6)` on random `x`
/// (grid nodes), `u ∈ K(x)` and Gaussian `ξ` of random scale.
pub fn growth_audit(f: &ForcingTerm, field: &ConstraintField, grid: &GridDomain, n_samples: usize, seed: u64) -> Result<GrowthReport> {
    let d = grid.dim();
    let m = field.components();
    let results = par::map_range(n_samples, |i| -> Result<(f64, ForcingWitness)> {
        let mut rng = SampleRng::new(seed, i as u64);
        let (x, u) = sample_state(field, grid, &mut rng, i % 2 == 0)?;
        let mut xi = vec![0.0; m * d];
        rng.fill_normal(&mut xi);
        let scale = math::pow(10.0, rng.uniform_in(-2.0, 2.0));
        xi.iter_mut().for_each(|v| *v *= scale);
        let val = f.eval(&x, &u, &xi);
        let bound = f.growth_bound(&x, &u, &xi) * (1.0 + 1e-6);
        let n = math::norm(&val);
        let ratio = if bound > 0.0 { n / bound } else if n == 0.0 { 0.0 } else { f64::INFINITY };
        Ok((ratio, ForcingWitness { x, u, xi, f: val }))
    });
    let mut worst = 0.0f64;
    let mut witness = None;
    for r in results {
        let (ratio, w) = r?;
        if witness.is_none() || ratio > worst {
            worst = worst.max(ratio);
            witness = Some(w);
        }
    }
    let pass = worst <= 1.0;
    Ok(GrowthReport { samples: n_samples, worst_ratio: worst, witness: if pass { None } else { witness }, pass })
}

/// Checks `f(x, u, ξ) ∈ T_{K(x)}(u)` for `u` on `∂K(x)` (projections of
/// exterior points) and random `ξ`.
pub fn audit_tangency(f: &ForcingTerm, field: &ConstraintField, grid: &GridDomain, n_samples: usize, seed: u64) -> Result<TangencyReport> {
    let d = grid.dim();
    let m = field.components();
    let results = par::map_range(n_samples, |i| -> Result<Option<ForcingWitness>> {
        let mut rng = SampleRng::new(seed ^ 0x7461_6e67, i as u64);
        let (x, u) = sample_state(field, grid, &mut rng, true)?;
        let mut xi = vec![0.0; m * d];
        rng.fill_normal(&mut xi);
        let val = f.eval(&x, &u, &xi);
        let q = TangentQuery::new(&x, &u, &val).with_tol_active(default_tol_active(&u));
        Ok(if field.tangent_cone_contains(&q)? { None } else { Some(ForcingWitness { x, u, xi, f: val }) })
    });
    let mut violations = 0;
    let mut witness = None;
    for r in results {
        if let Some(w) = r? {
            violations += 1;
            witness.get_or_insert(w);
        }
    }
    Ok(TangencyReport { samples: n_samples, violations, witness, pass: violations == 0 })
}
