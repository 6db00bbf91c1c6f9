//! Divergence-form operators
//! `P[u]_k = −Σ_{ij} ∂_i(A^{ij}_{kl} ∂_j u_l) + Σ_i B^i_{kl} ∂_i u_l + C_{kl} u_l`
//! and their discrete bilinear forms on a [`GridDomain`].
//!
//! The discrete form is
//! `B_h[u,v] = Δx^N ( Σ_i Σ_{i-faces} ⟨A^{ii} D_i u, D_i v⟩
//!                  + Σ_{i≠j} Σ_cells ⟨A^{ij} G_j u, G_i v⟩
//!                  + Σ_nodes ⟨B^i D⁰_i u + C u, v⟩ )`
//! with forward differences `D_i` on faces (coefficient at the face midpoint),
//! cell-averaged differences `G_i` for the mixed terms (coefficient at the cell
//! centre) and centred differences `D⁰_i` for the drift. `S` is the matrix of
//! this form divided by `Δx^N`; it is symmetric whenever `A^{ji} = (A^{ij})ᵀ` and
//! the drift vanishes.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::func::MatrixFn;
use crate::grid::{GridDomain, Multi, VectorField, MAX_DIM};
use crate::linalg::dense::sym_min_eigenvalue;
use crate::linalg::eigen::smallest_eigenvalue;
use crate::linalg::{CsrMatrix, Mat};
use crate::math;
use crate::par;
use crate::rng::SampleRng;

/// A coefficient block `x ↦ R^{M×M}`.
#[derive(Clone)]
pub enum MatrixField {
    Constant(Mat),
    Variable(MatrixFn),
}

impl MatrixField {
    pub fn eval(&self, x: &[f64]) -> Mat {
        match self {
            Self::Constant(m) => m.clone(),
            Self::Variable(f) => f(x),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Self::Constant(_))
    }
}

impl From<Mat> for MatrixField {
    fn from(m: Mat) -> Self {
        Self::Constant(m)
    }
}

/// Coefficients `A^{ij}`, `B^i`, `C`. Missing blocks are zero.
#[derive(Clone)]
pub struct OperatorCoefficients {
    dim: usize,
    m: usize,
    a: Vec<Option<MatrixField>>,
    b: Vec<Option<MatrixField>>,
    c: Option<MatrixField>,
    upwind: bool,
}

impl OperatorCoefficients {
    /// The zero operator; add blocks with the `with_*` builders.
    pub fn new(dim: usize, m: usize) -> Self {
        Self { dim, m, a: vec![None; dim * dim], b: vec![None; dim], c: None, upwind: false }
    }

    /// `A^{ij} = δ_{ij} I`.
    pub fn laplacian(dim: usize, m: usize) -> Self {
        Self::diagonal_diffusion(dim, &vec![1.0; m])
    }

    /// `A^{ij} = δ_{ij} diag(d)`.
    pub fn diagonal_diffusion(dim: usize, d: &[f64]) -> Self {
        let mut c = Self::new(dim, d.len());
        for i in 0..dim {
            c = c.with_a(i, i, Mat::diag(d));
        }
        c
    }

    pub fn with_a(mut self, i: usize, j: usize, f: impl Into<MatrixField>) -> Self {
        self.a[i * self.dim + j] = Some(f.into());
        self
    }

    pub fn with_drift(mut self, i: usize, f: impl Into<MatrixField>) -> Self {
        self.b[i] = Some(f.into());
        self
    }

    pub fn with_reaction(mut self, f: impl Into<MatrixField>) -> Self {
        self.c = Some(f.into());
        self
    }

    /// Upwind (one-sided, entrywise by sign) differences for the drift.
    pub fn with_upwind(mut self, on: bool) -> Self {
        self.upwind = on;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> usize {
        self.m
    }

    pub fn upwind(&self) -> bool {
        self.upwind
    }

    pub fn has_a(&self, i: usize, j: usize) -> bool {
        self.a[i * self.dim + j].is_some()
    }

    pub fn has_drift(&self, i: usize) -> bool {
        self.b[i].is_some()
    }

    pub fn a(&self, i: usize, j: usize, x: &[f64]) -> Mat {
        self.a[i * self.dim + j].as_ref().map_or_else(|| Mat::zeros(self.m, self.m), |f| f.eval(x))
    }

    pub fn b(&self, i: usize, x: &[f64]) -> Mat {
        self.b[i].as_ref().map_or_else(|| Mat::zeros(self.m, self.m), |f| f.eval(x))
    }

    pub fn c(&self, x: &[f64]) -> Mat {
        self.c.as_ref().map_or_else(|| Mat::zeros(self.m, self.m), |f| f.eval(x))
    }

    /// All second-order blocks are constants.
    pub fn constant_a(&self) -> bool {
        self.a.iter().all(|f| f.as_ref().is_none_or(|f| f.is_constant()))
    }

    /// Every block is diagonal at every node of the full grid and at the face
    /// midpoints used by the assembly.
    pub fn is_diagonal_on(&self, grid: &GridDomain) -> bool {
        let d = self.dim;
        let h = grid.spacing();
        for full in 0..grid.full_count() {
            let p = grid.multi_point(&grid.full_multi(full));
            let x = &p[..d];
            let mut pts: Vec<[f64; MAX_DIM]> = vec![p];
            for i in 0..d {
                let mut q = p;
                q[i] += 0.5 * h;
                pts.push(q);
            }
            for q in &pts {
                let y = &q[..d];
                for i in 0..d {
                    for j in 0..d {
                        if !self.a(i, j, y).is_diagonal(0.0) {
                            return false;
                        }
                    }
                }
            }
            for i in 0..d {
                if !self.b(i, x).is_diagonal(0.0) {
                    return false;
                }
            }
            if !self.c(x).is_diagonal(0.0) {
                return false;
            }
        }
        true
    }

    /// The `MN × MN` Legendre matrix `L_{(k,i),(l,j)} = A^{ij}_{kl}(x)`.
    pub fn legendre_matrix(&self, x: &[f64]) -> Mat {
        let (d, m) = (self.dim, self.m);
        let mut l = Mat::zeros(m * d, m * d);
        for i in 0..d {
            for j in 0..d {
                let a = self.a(i, j, x);
                for k in 0..m {
                    for q in 0..m {
                        l[(k * d + i, q * d + j)] = a[(k, q)];
                    }
                }
            }
        }
        l
    }

    /// Smallest eigenvalue of the symmetrized Legendre matrix at `x`.
    pub fn legendre_constant(&self, x: &[f64]) -> f64 {
        sym_min_eigenvalue(&self.legendre_matrix(x))
    }
}

/// Sup norms (Frobenius) of the coefficient blocks seen during assembly.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct CoefficientBounds {
    pub a_sup: f64,
    pub b_sup: f64,
    pub c_sup: f64,
}

/// Stiffness matrix of a discretized operator together with the coupling to
/// boundary values, which the criteria need to apply `S` to functions that do
/// not vanish on the ring.
#[derive(Clone)]
pub struct AssembledOperator {
    grid: GridDomain,
    m: usize,
    coeffs: OperatorCoefficients,
    stiffness: CsrMatrix,
    boundary: CsrMatrix,
    theta: f64,
    bounds: CoefficientBounds,
    norm_bound: f64,
}

struct RowBuilder<'g> {
    grid: &'g GridDomain,
    m: usize,
    row: usize,
    interior: Vec<(usize, usize, f64)>,
    ring: Vec<(usize, usize, f64)>,
    bad: Option<Error>,
}

impl RowBuilder<'_> {
    fn emit(&mut self, col: &Multi, block: &Mat, scale: f64) {
        let m = self.m;
        match self.grid.interior_index(col) {
            Some(c) => {
                for k in 0..m {
                    for l in 0..m {
                        let v = block[(k, l)];
                        if v != 0.0 {
                            self.interior.push((self.row * m + k, c * m + l, scale * v));
                        }
                    }
                }
            }
            None => {
                let c = self.grid.full_index(col);
                for k in 0..m {
                    for l in 0..m {
                        let v = block[(k, l)];
                        if v != 0.0 {
                            self.ring.push((self.row * m + k, c * m + l, scale * v));
                        }
                    }
                }
            }
        }
    }

    fn checked(&mut self, name: &str, x: &[f64], m: Mat, bounds: &mut f64) -> Mat {
        if !m.is_finite() && self.bad.is_none() {
            self.bad = Some(Error::NonFiniteCoefficient { name: name.into(), x: x.to_vec() });
        }
        *bounds = bounds.max(m.frobenius());
        m
    }
}

/// Assembles `S` for `coeffs` on `grid` and checks the Legendre condition on
/// (up to) 100 nodes.
pub fn assemble(coeffs: &OperatorCoefficients, grid: &GridDomain) -> Result<AssembledOperator> {
    if coeffs.dim() != grid.dim() {
        return Err(Error::GridMismatch);
    }
    let d = grid.dim();
    let m = coeffs.components();
    let nn = grid.node_count();

    let stride = (nn / 100).max(1);
    let mut theta = f64::INFINITY;
    for node in (0..nn).step_by(stride).take(100) {
        let p = grid.point(node);
        let t = coeffs.legendre_constant(&p[..d]);
        if !t.is_finite() {
            return Err(Error::NonFiniteCoefficient { name: "A".into(), x: p[..d].to_vec() });
        }
        if !(t > 0.0) {
            return Err(Error::EllipticityViolation { x: p[..d].to_vec(), value: t });
        }
        theta = theta.min(t);
    }

    let rows = par::map_range(nn, |node| assemble_row(coeffs, grid, node));
    let mut interior = Vec::new();
    let mut ring = Vec::new();
    let mut bounds = CoefficientBounds::default();
    for r in rows {
        let (a, b, cb) = r?;
        interior.extend(a);
        ring.extend(b);
        bounds.a_sup = bounds.a_sup.max(cb.a_sup);
        bounds.b_sup = bounds.b_sup.max(cb.b_sup);
        bounds.c_sup = bounds.c_sup.max(cb.c_sup);
    }
    let n = nn * m;
    let stiffness = CsrMatrix::from_triplets(n, n, interior);
    let boundary = CsrMatrix::from_triplets(n, grid.full_count() * m, ring);
    let norm_bound = stiffness.spectral_norm_bound();
    Ok(AssembledOperator { grid: *grid, m, coeffs: coeffs.clone(), stiffness, boundary, theta, bounds, norm_bound })
}

type RowTriplets = (Vec<(usize, usize, f64)>, Vec<(usize, usize, f64)>, CoefficientBounds);

fn assemble_row(coeffs: &OperatorCoefficients, grid: &GridDomain, node: usize) -> Result<RowTriplets> {
    let d = grid.dim();
    let h = grid.spacing();
    let h2 = h * h;
    let y = grid.multi_index(node);
    let py = grid.multi_point(&y);
    let mut rb = RowBuilder { grid, m: coeffs.components(), row: node, interior: Vec::new(), ring: Vec::new(), bad: None };
    let mut cb = CoefficientBounds::default();
    let step = |mi: &Multi, axis: usize, delta: isize| -> Multi {
        let mut o = *mi;
        o[axis] = (o[axis] as isize + delta) as usize;
        o
    };

    for i in 0..d {
        if !coeffs.has_a(i, i) {
            continue;
        }
        let mut xp = py;
        xp[i] += 0.5 * h;
        let mut xm = py;
        xm[i] -= 0.5 * h;
        let ap = rb.checked("A", &xp[..d], coeffs.a(i, i, &xp[..d]), &mut cb.a_sup);
        let am = rb.checked("A", &xm[..d], coeffs.a(i, i, &xm[..d]), &mut cb.a_sup);
        rb.emit(&y, &ap.add(&am), 1.0 / h2);
        rb.emit(&step(&y, i, 1), &ap, -1.0 / h2);
        rb.emit(&step(&y, i, -1), &am, -1.0 / h2);
    }

    let cross: Vec<(usize, usize)> =
        (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).filter(|&(i, j)| i != j && coeffs.has_a(i, j)).collect();
    if !cross.is_empty() {
        let weight = 1.0 / (math::pow(4.0, (d - 1) as f64) * h2);
        for delta in 0..(1usize << d) {
            // Cell whose corner `y` sits at offset `delta` from the lower corner.
            let mut lower = y;
            for a in 0..d {
                if delta >> a & 1 == 1 {
                    lower[a] -= 1;
                }
            }
            let mut centre = grid.multi_point(&lower);
            for c in centre.iter_mut().take(d) {
                *c += 0.5 * h;
            }
            for &(i, j) in &cross {
                let aij = rb.checked("A", &centre[..d], coeffs.a(i, j, &centre[..d]), &mut cb.a_sup);
                let si = if delta >> i & 1 == 1 { 1.0 } else { -1.0 };
                for corner in 0..(1usize << d) {
                    let mut z = lower;
                    for a in 0..d {
                        if corner >> a & 1 == 1 {
                            z[a] += 1;
                        }
                    }
                    let sj = if corner >> j & 1 == 1 { 1.0 } else { -1.0 };
                    rb.emit(&z, &aij, si * sj * weight);
                }
            }
        }
    }

    for i in 0..d {
        if !coeffs.has_drift(i) {
            continue;
        }
        let bi = rb.checked("B", &py[..d], coeffs.b(i, &py[..d]), &mut cb.b_sup);
        if coeffs.upwind() {
            let m = coeffs.components();
            let mut pos = Mat::zeros(m, m);
            let mut neg = Mat::zeros(m, m);
            for k in 0..m {
                for l in 0..m {
                    let v = bi[(k, l)];
                    if v > 0.0 {
                        pos[(k, l)] = v;
                    } else {
                        neg[(k, l)] = v;
                    }
                }
            }
            rb.emit(&y, &pos.sub(&neg), 1.0 / h);
            rb.emit(&step(&y, i, -1), &pos, -1.0 / h);
            rb.emit(&step(&y, i, 1), &neg, 1.0 / h);
        } else {
            rb.emit(&step(&y, i, 1), &bi, 0.5 / h);
            rb.emit(&step(&y, i, -1), &bi, -0.5 / h);
        }
    }

    if coeffs.c.is_some() {
        let c = rb.checked("C", &py[..d], coeffs.c(&py[..d]), &mut cb.c_sup);
        rb.emit(&y, &c, 1.0);
    }
    if let Some(e) = rb.bad {
        return Err(e);
    }
    Ok((rb.interior, rb.ring, cb))
}

impl AssembledOperator {
    pub fn grid(&self) -> &GridDomain {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.m
    }

    /// Number of unknowns `M · n_int`.
    pub fn unknowns(&self) -> usize {
        self.stiffness.nrows()
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    /// Columns of the full stencil that fall on the Dirichlet ring, indexed by
    /// full-grid node times `M`.
    pub fn boundary_coupling(&self) -> &CsrMatrix {
        &self.boundary
    }

    pub fn coefficients(&self) -> &OperatorCoefficients {
        &self.coeffs
    }

    /// Sampled Legendre constant `θ`.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn coefficient_bounds(&self) -> CoefficientBounds {
        self.bounds
    }

    /// Upper bound on `‖S‖₂`.
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    /// `c` with `|B[u,v]| ≤ c ‖u‖_{H¹} ‖v‖_{H¹}`: `N²·sup|A| + N·sup|B| + sup|C|`.
    pub fn continuity_constant(&self) -> f64 {
        let n = self.grid.dim() as f64;
        n * n * self.bounds.a_sup + n * self.bounds.b_sup + self.bounds.c_sup
    }

    pub fn apply(&self, u: &VectorField) -> Result<VectorField> {
        if u.grid() != &self.grid || u.components() != self.m {
            return Err(Error::GridMismatch);
        }
        VectorField::from_vec(self.grid, self.m, self.stiffness.matvec(u.data()))
    }

    /// Applies the full stencil to values given on every node of the full grid
    /// (`values[full * M + k]`), returning the interior rows.
    pub fn apply_full(&self, values: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let m = self.m;
        let mut interior = vec![0.0; g.node_count() * m];
        for node in 0..g.node_count() {
            let f = g.full_index(&g.multi_index(node));
            interior[node * m..(node + 1) * m].copy_from_slice(&values[f * m..(f + 1) * m]);
        }
        let mut out = self.stiffness.matvec(&interior);
        let ring = self.boundary.matvec(values);
        for (o, r) in out.iter_mut().zip(ring) {
            *o += r;
        }
        out
    }

    /// Discrete `H¹` Gram matrix `I + L` (componentwise Dirichlet Laplacian),
    /// so that `Δx^N ⟨Gu, u⟩ = ‖u‖²_{H¹}`.
    pub fn h1_gram(&self) -> CsrMatrix {
        let g = &self.grid;
        let m = self.m;
        let h2 = g.spacing() * g.spacing();
        let mut t = Vec::new();
        for node in 0..g.node_count() {
            for k in 0..m {
                let r = node * m + k;
                t.push((r, r, 1.0 + 2.0 * g.dim() as f64 / h2));
                for a in 0..g.dim() {
                    for fwd in [true, false] {
                        if let Some(nb) = g.neighbor(node, a, fwd) {
                            t.push((r, nb * m + k, -1.0 / h2));
                        }
                    }
                }
            }
        }
        CsrMatrix::from_triplets(g.node_count() * m, g.node_count() * m, t)
    }
}

/// `B[u, v] = Δx^N ⟨Su, v⟩`.
pub fn bilinear_form(op: &AssembledOperator, u: &VectorField, v: &VectorField) -> Result<f64> {
    if !u.same_shape(v) {
        return Err(Error::GridMismatch);
    }
    op.apply(u)?.inner(v)
}

/// Constants of the Gårding inequality `B[u,u] + ω‖u‖² ≥ α‖u‖²_{H¹}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GardingEstimate {
    pub omega: f64,
    pub alpha: f64,
    pub theta: f64,
    /// Smallest eigenvalue of `Sym S − αG` (lower bound).
    pub lambda_shifted: f64,
    /// Smallest eigenvalue of `Sym S`.
    pub lambda_sym: f64,
    /// Smallest normalized slack over the random verification sample.
    pub sample_slack: f64,
}

impl GardingEstimate {
    /// Supremum of admissible resolvent steps, `1/ω`.
    pub fn max_step(&self) -> f64 {
        if self.omega > 0.0 {
            1.0 / self.omega
        } else {
            f64::INFINITY
        }
    }
}

const GARDING_SEED: u64 = 0x6761_7264;
const GARDING_SAMPLES: usize = 1000;

/// Certifies `(ω, α)` for the discrete form: `α = max(θ/2, 1e-8)` and
/// `ω = max(0, −λ_min(Sym S − αG))` plus a relative margin, where `G` is the
/// discrete `H¹` Gram matrix. The inequality is then re-checked on 1000 random
/// fields.
pub fn estimate_garding(op: &AssembledOperator) -> Result<GardingEstimate> {
    let alpha = (0.5 * op.theta).max(1e-8);
    let sym = op.stiffness.symmetric_part();
    let gram = op.h1_gram();
    let shifted = sym.linear_combination(1.0, &gram, -alpha);
    let lam = smallest_eigenvalue(&shifted, GARDING_SEED)?;
    let lam_sym = smallest_eigenvalue(&sym, GARDING_SEED ^ 1)?;
    let omega = if lam.lower >= 0.0 { 0.0 } else { -lam.lower * (1.0 + 1e-8) + 1e-12 };

    let grid = op.grid;
    let m = op.m;
    let slacks = par::map_range(GARDING_SAMPLES, |s| -> Result<f64> {
        let mut rng = SampleRng::new(GARDING_SEED, s as u64);
        let u = if s % 2 == 0 {
            let mut data = vec![0.0; grid.node_count() * m];
            rng.fill_normal(&mut data);
            VectorField::from_vec(grid, m, data)?
        } else {
            smooth_random_field(&grid, m, &mut rng)
        };
        let b = bilinear_form(op, &u, &u)?;
        let l2 = u.l2_norm_sq();
        let h1 = l2 + u.h1_seminorm_sq();
        let lhs = b + omega * l2 - alpha * h1;
        let scale = math::abs(b) + omega * l2 + alpha * h1;
        Ok(if scale > 0.0 { lhs / scale } else { 0.0 })
    });
    let mut worst = f64::INFINITY;
    for s in slacks {
        worst = worst.min(s?);
    }
    if worst < -1e-10 {
        return Err(Error::EigSolverFailure(format!("Garding certificate violated by a sample (slack {worst:e})")));
    }
    Ok(GardingEstimate { omega, alpha, theta: op.theta, lambda_shifted: lam.lower, lambda_sym: lam_sym.value, sample_slack: worst })
}

/// Random low-frequency field: a short sum of products of cosines with
/// random integer frequencies and phases, one independent sum per component.
pub fn smooth_random_field(grid: &GridDomain, m: usize, rng: &mut SampleRng) -> VectorField {
    const TERMS: usize = 6;
    const MAX_FREQ: usize = 4;
    let d = grid.dim();
    let r = grid.half_width();
    let mut terms = Vec::with_capacity(m * TERMS);
    for _ in 0..m * TERMS {
        let amp = rng.normal() / math::sqrt(TERMS as f64);
        let mut fr = [0.0; MAX_DIM];
        let mut ph = [0.0; MAX_DIM];
        for a in 0..d {
            fr[a] = rng.below(MAX_FREQ + 1) as f64 * core::f64::consts::PI / (2.0 * r);
            ph[a] = rng.uniform_in(0.0, 2.0 * core::f64::consts::PI);
        }
        terms.push((amp, fr, ph));
    }
    VectorField::from_fn(*grid, m, |x, out| {
        for (k, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for (amp, fr, ph) in &terms[k * TERMS..(k + 1) * TERMS] {
                let mut p = *amp;
                for a in 0..d {
                    p *= math::cos(fr[a] * x[a] + ph[a]);
                }
                s += p;
            }
            *o = s;
        }
    })
}
