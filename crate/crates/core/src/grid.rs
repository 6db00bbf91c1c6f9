//! Uniform tensor grids over boxes `[-R, R]^N` and grid functions on their
//! interior nodes.
//!
//! Full-grid multi-indices run over `0..=n+1` on each axis; `0` and `n+1` are the
//! Dirichlet ring where every grid function vanishes. Interior nodes are numbered
//! lexicographically with the last axis varying fastest.

use alloc::vec;
use alloc::vec::Vec;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::math;

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// Multi-index into the full grid (boundary ring included). Unused axes are 0.
pub type Multi = [usize; MAX_DIM];
/// Spatial point. Unused axes are 0; slice with `[..dim]`.
pub type Point = [f64; MAX_DIM];

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridDomain {
    dim: usize,
    half_width: f64,
    n: usize,
    dx: f64,
}

impl GridDomain {
    pub fn new(dim: usize, half_width: f64, n_per_axis: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::InvalidArgument(alloc::format!("dimension {dim} not in 1..=3")));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidArgument("half width must be positive".into()));
        }
        if n_per_axis == 0 {
            return Err(Error::InvalidArgument("need at least one interior node per axis".into()));
        }
        let dx = 2.0 * half_width / (n_per_axis + 1) as f64;
        Ok(Self { dim, half_width, n: n_per_axis, dx })
    }

    /// Grid with prescribed spacing; `2R/Δx` must be an integer.
    pub fn with_spacing(dim: usize, half_width: f64, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::InvalidArgument("spacing must be positive".into()));
        }
        let cells = 2.0 * half_width / spacing;
        let rounded = math::round(cells);
        if math::abs(cells - rounded) > 1e-9 * rounded.max(1.0) || rounded < 2.0 {
            return Err(Error::InvalidArgument(alloc::format!(
                "2R/dx = {cells} is not an integer of at least 2"
            )));
        }
        let mut g = Self::new(dim, half_width, rounded as usize - 1)?;
        g.dx = spacing;
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn n_per_axis(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.dx
    }

    pub fn node_count(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Quadrature weight `Δx^N` of one node.
    pub fn cell_volume(&self) -> f64 {
        math::pow(self.dx, self.dim as f64)
    }

    pub fn full_per_axis(&self) -> usize {
        self.n + 2
    }

    pub fn full_count(&self) -> usize {
        self.full_per_axis().pow(self.dim as u32)
    }

    /// Coordinate of full-grid index `a` along any axis.
    #[inline]
    pub fn coord(&self, a: usize) -> f64 {
        -self.half_width + a as f64 * self.dx
    }

    /// Full-grid multi-index of interior node `node`.
    pub fn multi_index(&self, node: usize) -> Multi {
        let mut m = [0usize; MAX_DIM];
        let mut r = node;
        for a in (0..self.dim).rev() {
            m[a] = r % self.n + 1;
            r /= self.n;
        }
        m
    }

    /// Interior node of a full-grid multi-index, `None` on the boundary ring.
    pub fn interior_index(&self, m: &Multi) -> Option<usize> {
        let mut idx = 0;
        for &ma in m.iter().take(self.dim) {
            if ma == 0 || ma > self.n {
                return None;
            }
            idx = idx * self.n + (ma - 1);
        }
        Some(idx)
    }

    pub fn full_index(&self, m: &Multi) -> usize {
        let f = self.full_per_axis();
        m.iter().take(self.dim).fold(0, |acc, &ma| acc * f + ma)
    }

    pub fn full_multi(&self, full: usize) -> Multi {
        let f = self.full_per_axis();
        let mut m = [0usize; MAX_DIM];
        let mut r = full;
        for a in (0..self.dim).rev() {
            m[a] = r % f;
            r /= f;
        }
        m
    }

    pub fn is_boundary(&self, m: &Multi) -> bool {
        m.iter().take(self.dim).any(|&ma| ma == 0 || ma == self.n + 1)
    }

    pub fn multi_point(&self, m: &Multi) -> Point {
        let mut p = [0.0; MAX_DIM];
        for a in 0..self.dim {
            p[a] = self.coord(m[a]);
        }
        p
    }

    pub fn point(&self, node: usize) -> Point {
        self.multi_point(&self.multi_index(node))
    }

    /// Interior neighbour of `node` one step along `axis`, `None` if that step
    /// lands on the boundary ring.
    pub fn neighbor(&self, node: usize, axis: usize, forward: bool) -> Option<usize> {
        let mut m = self.multi_index(node);
        if forward {
            m[axis] += 1;
        } else {
            m[axis] -= 1;
        }
        self.interior_index(&m)
    }

    /// True when both grids share dimension and spacing and `self` fits inside
    /// `other` on the same lattice.
    pub fn nests_in(&self, other: &GridDomain) -> bool {
        if self.dim != other.dim || math::abs(self.dx - other.dx) > 1e-12 * self.dx {
            return false;
        }
        let shift = (other.half_width - self.half_width) / self.dx;
        shift > -1e-9 && math::abs(shift - math::round(shift)) < 1e-9
    }

    /// Extension by zero of `u` onto the larger grid `other`.
    pub fn extend_by_zero(&self, u: &VectorField, other: &GridDomain) -> Result<VectorField> {
        if u.grid() != self || !self.nests_in(other) {
            return Err(Error::GridMismatch);
        }
        let shift = math::round((other.half_width - self.half_width) / self.dx) as usize;
        let m = u.components();
        let mut out = VectorField::zeros(*other, m);
        for node in 0..self.node_count() {
            let mut mi = self.multi_index(node);
            for a in 0..self.dim {
                mi[a] += shift;
            }
            let j = other.interior_index(&mi).expect("nested grid");
            out.node_mut(j).copy_from_slice(u.node(node));
        }
        Ok(out)
    }

    /// Interior node indices `0..node_count` with their points.
    pub fn points(&self) -> impl Iterator<Item = (usize, Point)> + '_ {
        (0..self.node_count()).map(move |i| (i, self.point(i)))
    }
}

/// Grid function `u : interior nodes → R^M`, stored node-major
/// (`data[node * M + k]`).
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: GridDomain,
    m: usize,
    data: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: GridDomain, m: usize) -> Self {
        Self { grid, m, data: vec![0.0; grid.node_count() * m] }
    }

    pub fn from_vec(grid: GridDomain, m: usize, data: Vec<f64>) -> Result<Self> {
        if m == 0 || data.len() != grid.node_count() * m {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid, m, data })
    }

    /// Samples `f(x, out)` at every interior node.
    pub fn from_fn(grid: GridDomain, m: usize, mut f: impl FnMut(&[f64], &mut [f64])) -> Self {
        let mut u = Self::zeros(grid, m);
        let d = grid.dim();
        for node in 0..grid.node_count() {
            let p = grid.point(node);
            f(&p[..d], &mut u.data[node * m..(node + 1) * m]);
        }
        u
    }

    pub fn constant(grid: GridDomain, value: &[f64]) -> Self {
        Self::from_fn(grid, value.len(), |_, out| out.copy_from_slice(value))
    }

    pub fn grid(&self) -> &GridDomain {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.m
    }

    pub fn nodes(&self) -> usize {
        self.grid.node_count()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn node(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    #[inline]
    pub fn node_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.m..(i + 1) * self.m]
    }

    /// Component `k` as a scalar grid function.
    pub fn component(&self, k: usize) -> Vec<f64> {
        self.data.iter().skip(k).step_by(self.m).copied().collect()
    }

    /// Value at a full-grid multi-index; zero on the Dirichlet ring.
    #[inline]
    pub fn value_at(&self, m: &Multi, k: usize) -> f64 {
        match self.grid.interior_index(m) {
            Some(i) => self.data[i * self.m + k],
            None => 0.0,
        }
    }

    pub fn same_shape(&self, other: &VectorField) -> bool {
        self.grid == other.grid && self.m == other.m
    }

    fn check(&self, other: &VectorField) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `self += a · other`.
    pub fn axpy(&mut self, a: f64, other: &VectorField) -> Result<()> {
        self.check(other)?;
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
        Ok(())
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|v| *v *= a);
    }

    pub fn sub(&self, other: &VectorField) -> Result<VectorField> {
        let mut d = self.clone();
        d.axpy(-1.0, other)?;
        Ok(d)
    }

    /// Discrete `L²` inner product `Δx^N Σ ⟨u_i, v_i⟩`.
    pub fn inner(&self, other: &VectorField) -> Result<f64> {
        self.check(other)?;
        Ok(self.grid.cell_volume() * math::dot(&self.data, &other.data))
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.grid.cell_volume() * math::dot(&self.data, &self.data)
    }

    pub fn l2_norm(&self) -> f64 {
        math::sqrt(self.l2_norm_sq())
    }

    pub fn sup_norm(&self) -> f64 {
        math::max_abs(&self.data)
    }

    /// Largest Euclidean norm `|u(x)|` over nodes.
    pub fn max_node_norm(&self) -> f64 {
        (0..self.nodes()).fold(0.0, |m, i| m.max(math::norm(self.node(i))))
    }

    /// `Δx^N Σ_faces |D_i u|²` with forward differences over every face of the
    /// full grid, boundary faces included.
    pub fn h1_seminorm_sq(&self) -> f64 {
        let g = &self.grid;
        let dx = g.spacing();
        let mut s = 0.0;
        for node in 0..g.node_count() {
            let mi = g.multi_index(node);
            for a in 0..g.dim() {
                let mut fwd = mi;
                fwd[a] += 1;
                for k in 0..self.m {
                    let u0 = self.data[node * self.m + k];
                    let d = (self.value_at(&fwd, k) - u0) / dx;
                    s += d * d;
                    if mi[a] == 1 {
                        let b = u0 / dx;
                        s += b * b;
                    }
                }
            }
        }
        s * g.cell_volume()
    }

    /// Discrete `H¹` norm: `(‖u‖² + |u|²_{1,2})^{1/2}`.
    pub fn h1_norm(&self) -> f64 {
        math::sqrt(self.l2_norm_sq() + self.h1_seminorm_sq())
    }

    /// Discrete `H²` seminorm squared: all second differences `∂_i∂_j u`
    /// (three-point for `i = j`, centred four-point for `i ≠ j`).
    pub fn h2_seminorm_sq(&self) -> f64 {
        let g = &self.grid;
        let dx2 = g.spacing() * g.spacing();
        let d = g.dim();
        let mut s = 0.0;
        for node in 0..g.node_count() {
            let mi = g.multi_index(node);
            for k in 0..self.m {
                let u0 = self.data[node * self.m + k];
                for i in 0..d {
                    let (mut p, mut q) = (mi, mi);
                    p[i] += 1;
                    q[i] -= 1;
                    let v = (self.value_at(&p, k) - 2.0 * u0 + self.value_at(&q, k)) / dx2;
                    s += v * v;
                    for j in 0..d {
                        if j == i {
                            continue;
                        }
                        let mut pp = mi;
                        pp[i] += 1;
                        pp[j] += 1;
                        let mut pm = mi;
                        pm[i] += 1;
                        pm[j] -= 1;
                        let mut mp = mi;
                        mp[i] -= 1;
                        mp[j] += 1;
                        let mut mm = mi;
                        mm[i] -= 1;
                        mm[j] -= 1;
                        let v = (self.value_at(&pp, k) - self.value_at(&pm, k) - self.value_at(&mp, k)
                            + self.value_at(&mm, k))
                            / (4.0 * dx2);
                        s += v * v;
                    }
                }
            }
        }
        s * g.cell_volume()
    }

    /// Centred-difference gradient at `node` written as `out[k * N + i] = ∂_i u_k`,
    /// using the zero boundary values next to the ring.
    pub fn gradient_at(&self, node: usize, out: &mut [f64]) {
        let g = &self.grid;
        let d = g.dim();
        let mi = g.multi_index(node);
        let h2 = 2.0 * g.spacing();
        for i in 0..d {
            let (mut p, mut q) = (mi, mi);
            p[i] += 1;
            q[i] -= 1;
            for k in 0..self.m {
                out[k * d + i] = (self.value_at(&p, k) - self.value_at(&q, k)) / h2;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
