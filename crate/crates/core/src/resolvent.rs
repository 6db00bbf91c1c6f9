//! Resolvents `J_h = (I + hS)^{-1}`, Post–Widder stepping `(J_{t/n})^n` and
//! sampled verification of `J_h(K) ⊂ K`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::Serialize;

use crate::constraint::{default_tol_active, ConstraintField, TangentQuery};
use crate::error::{Error, Result};
use crate::grid::VectorField;
use crate::linalg::{CsrMatrix, LinearSolver};
use crate::math;
use crate::operator::{smooth_random_field, AssembledOperator, GardingEstimate};
use crate::par;
use crate::rng::SampleRng;

/// A factorized `I + hS` for one admissible step `h` (`h > 0`, `hω < 1`).
pub struct ResolventHandle<'a> {
    op: &'a AssembledOperator,
    h: f64,
    omega: f64,
    solver: LinearSolver,
}

const FACTOR_CHECK_SEED: u64 = 0x7265_736f;

impl<'a> ResolventHandle<'a> {
    /// Factorizes `I + hS` and checks the solve on a random right-hand side.
    pub fn new(op: &'a AssembledOperator, garding: &GardingEstimate, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InadmissibleStep { h, product: h * garding.omega });
        }
        let product = h * garding.omega;
        if !(product < 1.0) {
            return Err(Error::InadmissibleStep { h, product });
        }
        let n = op.unknowns();
        let matrix = CsrMatrix::identity(n).linear_combination(1.0, op.stiffness(), h);
        let check = matrix.clone();
        let solver = LinearSolver::new(matrix)?;
        let mut rng = SampleRng::new(FACTOR_CHECK_SEED, n as u64);
        let mut u = vec![0.0; n];
        rng.fill_normal(&mut u);
        let v = solver.solve(&u)?;
        let back = check.matvec(&v);
        let res = math::dist(&back, &u);
        if !(res <= 1e-10 * math::norm(&u)) {
            return Err(Error::SingularSystem(format!(
                "resolvent residual {res:e} exceeds tolerance at h = {h}"
            )));
        }
        Ok(Self { op, h, omega: garding.omega, solver })
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    pub fn operator(&self) -> &AssembledOperator {
        self.op
    }

    /// `(1 − hω)^{-1}`, the bound on `‖J_h‖` in the self-adjoint case.
    pub fn norm_bound(&self) -> f64 {
        1.0 / (1.0 - self.h * self.omega)
    }

    pub fn is_direct(&self) -> bool {
        self.solver.is_direct()
    }

    /// Solves `(I + hS) v = u`.
    pub fn apply(&self, u: &VectorField) -> Result<VectorField> {
        if u.grid() != self.op.grid() || u.components() != self.op.components() {
            return Err(Error::GridMismatch);
        }
        let v = self.solver.solve(u.data())?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::SingularSystem("non-finite resolvent output".into()));
        }
        VectorField::from_vec(*u.grid(), u.components(), v)
    }

    /// `J_h^n u`.
    pub fn apply_n(&self, u: &VectorField, n: usize) -> Result<VectorField> {
        let mut v = u.clone();
        for _ in 0..n {
            v = self.apply(&v)?;
        }
        Ok(v)
    }
}

/// Factorizations of `I + hS` keyed by `h`, created on first use and shared
/// afterwards.
pub struct ResolventCache<'a> {
    op: &'a AssembledOperator,
    garding: GardingEstimate,
    handles: Vec<ResolventHandle<'a>>,
}

impl<'a> ResolventCache<'a> {
    pub fn new(op: &'a AssembledOperator, garding: GardingEstimate) -> Self {
        Self { op, garding, handles: Vec::new() }
    }

    /// The handle for `h`, factorizing on the first request.
    pub fn get(&mut self, h: f64) -> Result<&ResolventHandle<'a>> {
        let pos = match self.handles.iter().position(|r| r.h == h) {
            Some(p) => p,
            None => {
                self.handles.push(ResolventHandle::new(self.op, &self.garding, h)?);
                self.handles.len() - 1
            }
        };
        Ok(&self.handles[pos])
    }

    pub fn len(&self) -> usize {
        self.handles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.handles.is_empty()
    }
}

/// `(J_{t/n})^n u`, an approximation of `e^{-tS} u`.
pub fn semigroup_step(
    op: &AssembledOperator,
    garding: &GardingEstimate,
    u: &VectorField,
    t_final: f64,
    n_steps: usize,
) -> Result<VectorField> {
    if t_final == 0.0 || n_steps == 0 {
        return Ok(u.clone());
    }
    let rh = ResolventHandle::new(op, garding, t_final / n_steps as f64)?;
    rh.apply_n(u, n_steps)
}

/// Worst sample for one step size.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvarianceEntry {
    pub h: f64,
    /// Largest nodewise `d(x, (J_h u)(x))` over all samples.
    pub worst_distance: f64,
    /// Tolerance `1e-8 (1 + ‖u‖_∞)` of that sample.
    pub tolerance: f64,
    pub witness_node: usize,
    pub witness_x: Vec<f64>,
    pub witness_sample: usize,
    pub pass: bool,
}

/// Outcome of [`verify_resolvent_invariance`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub samples: usize,
    pub entries: Vec<InvarianceEntry>,
    pub pass: bool,
}

impl InvarianceReport {
    /// The failing entry with the largest distance, if any.
    pub fn worst_failure(&self) -> Option<&InvarianceEntry> {
        self.entries
            .iter()
            .filter(|e| !e.pass)
            .fold(None, |best: Option<&InvarianceEntry>, e| match best {
                Some(b) if b.worst_distance >= e.worst_distance => Some(b),
                _ => Some(e),
            })
    }
}

/// One random grid function with values in `K`: a smooth low-frequency field
/// scaled past the size of `K(x)` around its reference point, then projected,
/// so that a good share of nodes sits on `∂K(x)`.
pub fn invariant_sample(op: &AssembledOperator, field: &ConstraintField, seed: u64, index: usize) -> Result<VectorField> {
    let grid = *op.grid();
    let d = grid.dim();
    let m = op.components();
    let mut rng = SampleRng::new(seed, index as u64);
    let g = smooth_random_field(&grid, m, &mut rng);
    let amp = 1.5 * (0.5 + rng.uniform());
    let mut data = Vec::with_capacity(g.data().len());
    let mut target = vec![0.0; m];
    for node in 0..grid.node_count() {
        let p = grid.point(node);
        let x = &p[..d];
        let (c, s) = field.reference_point(x)?;
        for k in 0..m {
            target[k] = c[k] + amp * s * g.node(node)[k];
        }
        data.extend(field.project(x, &target)?);
    }
    VectorField::from_vec(grid, m, data)
}

struct SampleOutcome {
    distance: f64,
    tolerance: f64,
    slack: f64,
    node: usize,
}

/// Applies `J_h` for each `h` in `h_list` to `n_samples` random fields with
/// values in `K` and records the largest nodewise distance from `K`. An entry
/// passes when every sample stays within `1e-8 (1 + ‖u‖_∞)`; `h = 0` is the
/// identity.
pub fn verify_resolvent_invariance(
    op: &AssembledOperator,
    garding: &GardingEstimate,
    field: &ConstraintField,
    n_samples: usize,
    h_list: &[f64],
    seed: u64,
) -> Result<InvarianceReport> {
    if field.components() != op.components() {
        return Err(Error::GridMismatch);
    }
    let samples: Vec<VectorField> = par::map_range(n_samples, |s| invariant_sample(op, field, seed, s))
        .into_iter()
        .collect::<Result<_>>()?;
    let grid = *op.grid();
    let d = grid.dim();
    let mut entries = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let handle = if h == 0.0 { None } else { Some(ResolventHandle::new(op, garding, h)?) };
        let outcomes = par::map_range(n_samples, |s| -> Result<SampleOutcome> {
            let u = &samples[s];
            let tolerance = 1e-8 * (1.0 + u.sup_norm());
            let v = match &handle {
                Some(rh) => rh.apply(u)?,
                None => u.clone(),
            };
            let (distance, node) = field.max_violation(&v)?;
            Ok(SampleOutcome { distance, tolerance, slack: distance - tolerance, node })
        });
        let mut worst: Option<(usize, SampleOutcome)> = None;
        let mut pass = true;
        for (s, o) in outcomes.into_iter().enumerate() {
            let o = o?;
            pass &= o.slack <= 0.0;
            let better = match &worst {
                None => true,
                Some((_, w)) => o.distance > w.distance,
            };
            if better {
                worst = Some((s, o));
            }
        }
        let (sample, o) = worst.unwrap_or((0, SampleOutcome { distance: 0.0, tolerance: 1e-8, slack: 0.0, node: 0 }));
        let p = grid.point(o.node);
        entries.push(InvarianceEntry {
            h,
            worst_distance: o.distance,
            tolerance: o.tolerance,
            witness_node: o.node,
            witness_x: p[..d].to_vec(),
            witness_sample: sample,
            pass,
        });
    }
    let pass = entries.iter().all(|e| e.pass);
    Ok(InvarianceReport { samples: n_samples, entries, pass })
}

/// Nodewise test of `−Su(x) ∈ T_{K(x)}(u(x))` on sampled `u` with values in `K`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeneratorTangencyReport {
    pub samples: usize,
    pub checked_nodes: usize,
    pub violations: usize,
    pub witness_node: Option<usize>,
    pub witness_x: Option<Vec<f64>>,
    pub pass: bool,
}

/// Discrete analogue of the tangency characterization of invariance. It is
/// reported next to [`verify_resolvent_invariance`], not used as a gate: the
/// two discrete tests need not agree near `∂K`.
pub fn audit_generator_tangency(
    op: &AssembledOperator,
    field: &ConstraintField,
    n_samples: usize,
    seed: u64,
) -> Result<GeneratorTangencyReport> {
    let grid = *op.grid();
    let d = grid.dim();
    let m = op.components();
    let per_sample = par::map_range(n_samples, |s| -> Result<(usize, Option<usize>)> {
        let u = invariant_sample(op, field, seed, s)?;
        let su = op.apply(&u)?;
        let mut bad = 0;
        let mut first = None;
        let mut v = vec![0.0; m];
        for node in 0..grid.node_count() {
            let p = grid.point(node);
            for (vk, s) in v.iter_mut().zip(su.node(node)) {
                *vk = -s;
            }
            let un = u.node(node);
            let q = TangentQuery::new(&p[..d], un, &v).with_tol_active(default_tol_active(un));
            if !field.tangent_cone_contains(&q)? {
                bad += 1;
                first.get_or_insert(node);
            }
        }
        Ok((bad, first))
    });
    let mut violations = 0;
    let mut witness = None;
    for r in per_sample {
        let (bad, first) = r?;
        violations += bad;
        if witness.is_none() {
            witness = first;
        }
    }
    Ok(GeneratorTangencyReport {
        samples: n_samples,
        checked_nodes: n_samples * grid.node_count(),
        violations,
        witness_node: witness,
        witness_x: witness.map(|n| grid.point(n)[..d].to_vec()),
        pass: violations == 0,
    })
}
