//! Pointwise convex constraints `K(x) ⊂ R^M`: metric projection, distance,
//! membership and tangent-cone tests.
//!
//! Families:
//! * moving rectangle `σ(x) ≤ u ≤ τ(x)` (componentwise clamp);
//! * tube `b(x) + α(x)·K₀` with `K₀` the unit ball or a fixed box;
//! * ellipsoidal funnel `E(x)·B`;
//! * moving polyhedron `⋂_j {⟨p_j, u⟩ ≤ ξ_j(x)}` with finitely many unit normals;
//! * a constant convex set given by its own projection ([`ConvexSet`]).

mod ellipsoid;
mod polyhedron;

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::func::{MatrixFn, ScalarFn, VectorFn};
use crate::grid::GridDomain;
use crate::math;

use ellipsoid::EllipsoidFrame;

/// Relative slack allowed in cone inequalities such as `⟨p, v⟩ ≤ 0`.
pub const CONE_TOL: f64 = 1e-10;

/// Default activity tolerance `1e-8·(1 + |u|)`.
pub fn default_tol_active(u: &[f64]) -> f64 {
    1e-8 * (1.0 + math::norm(u))
}

/// A constant closed convex set described by its metric projection.
pub trait ConvexSet: Send + Sync {
    fn components(&self) -> usize;

    fn project(&self, u: &[f64], out: &mut [f64]) -> Result<()>;

    /// `sup_{w∈K} |w|`, if finite and known.
    fn envelope(&self) -> Option<f64> {
        None
    }

    /// Tangent-cone membership. The default compares `d(u + εv, K)` with `ε|v|`,
    /// which is exact for polyhedral sets and first-order accurate otherwise.
    fn tangent_contains(&self, u: &[f64], v: &[f64], _tol_active: f64) -> Result<bool> {
        let nv = math::norm(v);
        if nv == 0.0 {
            return Ok(true);
        }
        let eps = 1e-6 * (1.0 + math::norm(u)) / nv;
        let moved: Vec<f64> = u.iter().zip(v).map(|(a, b)| a + eps * b).collect();
        let mut p = vec![0.0; u.len()];
        self.project(&moved, &mut p)?;
        Ok(math::dist(&moved, &p) <= 1e-4 * eps * nv)
    }
}

/// Closed Euclidean ball, the stock [`ConvexSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl ConvexSet for Ball {
    fn components(&self) -> usize {
        self.center.len()
    }

    fn project(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        let d = math::dist(u, &self.center);
        if d <= self.radius {
            out.copy_from_slice(u);
        } else {
            let s = self.radius / d;
            for i in 0..u.len() {
                out[i] = self.center[i] + s * (u[i] - self.center[i]);
            }
        }
        Ok(())
    }

    fn envelope(&self) -> Option<f64> {
        Some(math::norm(&self.center) + self.radius)
    }

    fn tangent_contains(&self, u: &[f64], v: &[f64], tol_active: f64) -> Result<bool> {
        let y: Vec<f64> = u.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        Ok(ball_cone(&y, self.radius, v, tol_active))
    }
}

fn ball_cone(y: &[f64], radius: f64, v: &[f64], tol_active: f64) -> bool {
    let ny = math::norm(y);
    if ny < radius - tol_active {
        return true;
    }
    math::dot(y, v) <= CONE_TOL * ny * math::norm(v)
}

fn box_cone(u: &[f64], lo: &[f64], hi: &[f64], v: &[f64], tol_active: f64) -> bool {
    let ct = CONE_TOL * math::norm(v);
    for k in 0..u.len() {
        if u[k] - lo[k] <= tol_active && v[k] < -ct {
            return false;
        }
        if hi[k] - u[k] <= tol_active && v[k] > ct {
            return false;
        }
    }
    true
}

/// Base set of a tube.
#[derive(Clone, Debug, PartialEq)]
pub enum TubeBase {
    UnitBall,
    Rectangle { lower: Vec<f64>, upper: Vec<f64> },
}

/// Half-space `⟨normal, u⟩ ≤ offset(x)`.
#[derive(Clone)]
pub struct HalfSpace {
    pub normal: Vec<f64>,
    pub offset: ScalarFn,
}

impl HalfSpace {
    pub fn new(normal: Vec<f64>, offset: ScalarFn) -> Self {
        Self { normal, offset }
    }
}

#[derive(Clone)]
pub enum ConstraintKind {
    Rectangle { lower: VectorFn, upper: VectorFn },
    Tube { center: VectorFn, scale: ScalarFn, base: TubeBase },
    Ellipsoid { shape: MatrixFn, det_floor: f64 },
    Polyhedron { faces: Vec<HalfSpace> },
    ConstantConvex(Arc<dyn ConvexSet>),
}

/// The multimap `x ↦ K(x)`, with an optional user-supplied envelope
/// `m(x) ≥ sup_{u∈K(x)} |u|`.
#[derive(Clone)]
pub struct ConstraintField {
    m: usize,
    kind: ConstraintKind,
    envelope: Option<ScalarFn>,
}

/// Query for [`ConstraintField::tangent_cone_contains`].
#[derive(Clone, Copy, Debug)]
pub struct TangentQuery<'a> {
    pub x: &'a [f64],
    pub u: &'a [f64],
    pub v: &'a [f64],
    pub tol_active: f64,
}

impl<'a> TangentQuery<'a> {
    pub fn new(x: &'a [f64], u: &'a [f64], v: &'a [f64]) -> Self {
        Self { x, u, v, tol_active: default_tol_active(u) }
    }

    pub fn with_tol_active(mut self, tol: f64) -> Self {
        self.tol_active = tol;
        self
    }
}

impl ConstraintField {
    pub fn rectangle(m: usize, lower: VectorFn, upper: VectorFn) -> Self {
        Self { m, kind: ConstraintKind::Rectangle { lower, upper }, envelope: None }
    }

    pub fn constant_rectangle(lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidConstraint("bound lengths differ".into()));
        }
        if lower.iter().zip(upper).any(|(a, b)| !(a <= b)) {
            return Err(Error::InvalidConstraint("lower bound exceeds upper bound".into()));
        }
        Ok(Self::rectangle(lower.len(), crate::func::constant_vector(lower), crate::func::constant_vector(upper)))
    }

    pub fn tube(m: usize, center: VectorFn, scale: ScalarFn, base: TubeBase) -> Result<Self> {
        if let TubeBase::Rectangle { lower, upper } = &base {
            if lower.len() != m || upper.len() != m || lower.iter().zip(upper).any(|(a, b)| !(a <= b)) {
                return Err(Error::InvalidConstraint("tube base rectangle is malformed".into()));
            }
        }
        Ok(Self { m, kind: ConstraintKind::Tube { center, scale, base }, envelope: None })
    }

    pub fn ellipsoid(m: usize, shape: MatrixFn, det_floor: f64) -> Result<Self> {
        if !(det_floor > 0.0) {
            return Err(Error::InvalidConstraint("determinant floor must be positive".into()));
        }
        Ok(Self { m, kind: ConstraintKind::Ellipsoid { shape, det_floor }, envelope: None })
    }

    pub fn polyhedron(m: usize, faces: Vec<HalfSpace>) -> Result<Self> {
        for f in &faces {
            if f.normal.len() != m {
                return Err(Error::InvalidConstraint("normal has wrong length".into()));
            }
            if math::abs(math::norm(&f.normal) - 1.0) > 1e-12 {
                return Err(Error::InvalidConstraint("polyhedron normals must be unit vectors".into()));
            }
        }
        Ok(Self { m, kind: ConstraintKind::Polyhedron { faces }, envelope: None })
    }

    pub fn constant_convex(set: Arc<dyn ConvexSet>) -> Self {
        Self { m: set.components(), kind: ConstraintKind::ConstantConvex(set), envelope: None }
    }

    /// Overrides the envelope `m(x)`.
    pub fn with_envelope(mut self, envelope: ScalarFn) -> Self {
        self.envelope = Some(envelope);
        self
    }

    pub fn components(&self) -> usize {
        self.m
    }

    pub fn kind(&self) -> &ConstraintKind {
        &self.kind
    }

    pub fn variant_name(&self) -> &'static str {
        match self.kind {
            ConstraintKind::Rectangle { .. } => "rectangle",
            ConstraintKind::Tube { .. } => "tube",
            ConstraintKind::Ellipsoid { .. } => "ellipsoid",
            ConstraintKind::Polyhedron { .. } => "polyhedron",
            ConstraintKind::ConstantConvex(_) => "constant-convex",
        }
    }

    fn bounds(lower: &VectorFn, upper: &VectorFn, x: &[f64], m: usize) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![0.0; m];
        let mut hi = vec![0.0; m];
        lower(x, &mut lo);
        upper(x, &mut hi);
        (lo, hi)
    }

    /// Metric projection of `u` onto `K(x)`, written into `out`.
    pub fn project_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(u.len(), self.m);
        match &self.kind {
            ConstraintKind::Rectangle { lower, upper } => {
                let (lo, hi) = Self::bounds(lower, upper, x, self.m);
                for k in 0..self.m {
                    out[k] = u[k].max(lo[k]).min(hi[k]);
                }
                Ok(())
            }
            ConstraintKind::Tube { center, scale, base } => {
                let mut b = vec![0.0; self.m];
                center(x, &mut b);
                let a = scale(x);
                if !(a > 0.0) {
                    return Err(Error::InvalidConstraint(alloc::format!("tube scale {a} is not positive")));
                }
                let y: Vec<f64> = u.iter().zip(&b).map(|(ui, bi)| (ui - bi) / a).collect();
                match base {
                    TubeBase::UnitBall => {
                        let ny = math::norm(&y);
                        let s = if ny > 1.0 { 1.0 / ny } else { 1.0 };
                        for k in 0..self.m {
                            out[k] = b[k] + a * s * y[k];
                        }
                    }
                    TubeBase::Rectangle { lower, upper } => {
                        for k in 0..self.m {
                            out[k] = b[k] + a * y[k].max(lower[k]).min(upper[k]);
                        }
                    }
                }
                Ok(())
            }
            ConstraintKind::Ellipsoid { shape, det_floor } => {
                let frame = EllipsoidFrame::new(&shape(x), *det_floor, x)?;
                frame.project(u, out).map(|_| ())
            }
            ConstraintKind::Polyhedron { faces } => {
                let normals: Vec<&[f64]> = faces.iter().map(|f| f.normal.as_slice()).collect();
                let offsets: Vec<f64> = faces.iter().map(|f| (f.offset)(x)).collect();
                polyhedron::project(&normals, &offsets, u, out, x)
            }
            ConstraintKind::ConstantConvex(set) => set.project(u, out),
        }
    }

    pub fn project(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.m];
        self.project_into(x, u, &mut out)?;
        Ok(out)
    }

    /// `d(u, K(x)) = |u − project(x, u)|`.
    pub fn distance(&self, x: &[f64], u: &[f64]) -> Result<f64> {
        let p = self.project(x, u)?;
        Ok(math::dist(u, &p))
    }

    pub fn membership(&self, x: &[f64], u: &[f64], tol: f64) -> Result<bool> {
        Ok(self.distance(x, u)? <= tol)
    }

    /// Tests `v ∈ T_{K(x)}(u)`. Constraints within `tol_active` of equality at
    /// `u` count as active; cone inequalities allow a relative slack of
    /// [`CONE_TOL`]. Fails with [`Error::NotInConstraint`] when `u` is not in
    /// `K(x)` up to `max(tol_active, 1e-8(1+|u|))`.
    pub fn tangent_cone_contains(&self, q: &TangentQuery<'_>) -> Result<bool> {
        if !(q.tol_active > 0.0) {
            return Err(Error::InvalidArgument("tol_active must be positive".into()));
        }
        let (x, u, v, tol) = (q.x, q.u, q.v, q.tol_active);
        let d = self.distance(x, u)?;
        if d > tol.max(1e-8 * (1.0 + math::norm(u))) {
            return Err(Error::NotInConstraint { distance: d });
        }
        let ct = CONE_TOL * math::norm(v);
        Ok(match &self.kind {
            ConstraintKind::Rectangle { lower, upper } => {
                let (lo, hi) = Self::bounds(lower, upper, x, self.m);
                box_cone(u, &lo, &hi, v, tol)
            }
            ConstraintKind::Tube { center, scale, base } => {
                let mut b = vec![0.0; self.m];
                center(x, &mut b);
                let a = scale(x);
                let y: Vec<f64> = u.iter().zip(&b).map(|(ui, bi)| (ui - bi) / a).collect();
                match base {
                    TubeBase::UnitBall => ball_cone(&y, 1.0, v, tol / a),
                    TubeBase::Rectangle { lower, upper } => box_cone(&y, lower, upper, v, tol / a),
                }
            }
            ConstraintKind::Ellipsoid { shape, det_floor } => {
                let frame = EllipsoidFrame::new(&shape(x), *det_floor, x)?;
                let z = frame.whiten(u);
                let nz = math::norm(&z);
                if 1.0 - nz > tol {
                    true
                } else {
                    let w = frame.whiten(v);
                    math::dot(&w, &z) <= CONE_TOL * math::norm(&w) * nz
                }
            }
            ConstraintKind::Polyhedron { faces } => faces.iter().all(|f| {
                let slack = (f.offset)(x) - math::dot(&f.normal, u);
                slack > tol || math::dot(&f.normal, v) <= ct
            }),
            ConstraintKind::ConstantConvex(set) => set.tangent_contains(u, v, tol)?,
        })
    }

    /// Envelope `m(x)`: the user override if present, otherwise the exact
    /// `sup_{u∈K(x)} |u|` where it is available in closed form, else `+∞`.
    pub fn envelope_at(&self, x: &[f64]) -> f64 {
        if let Some(e) = &self.envelope {
            return e(x);
        }
        match &self.kind {
            ConstraintKind::Rectangle { lower, upper } => {
                let (lo, hi) = Self::bounds(lower, upper, x, self.m);
                math::sqrt(lo.iter().zip(&hi).map(|(a, b)| {
                    let t = math::abs(*a).max(math::abs(*b));
                    t * t
                }).sum())
            }
            ConstraintKind::Tube { center, scale, base } => {
                let mut b = vec![0.0; self.m];
                center(x, &mut b);
                let r = match base {
                    TubeBase::UnitBall => 1.0,
                    TubeBase::Rectangle { lower, upper } => math::sqrt(
                        lower.iter().zip(upper).map(|(a, b)| {
                            let t = math::abs(*a).max(math::abs(*b));
                            t * t
                        }).sum(),
                    ),
                };
                math::norm(&b) + scale(x) * r
            }
            ConstraintKind::Ellipsoid { shape, .. } => ellipsoid::envelope(&shape(x)),
            ConstraintKind::Polyhedron { .. } => f64::INFINITY,
            ConstraintKind::ConstantConvex(set) => set.envelope().unwrap_or(f64::INFINITY),
        }
    }

    /// A point of `K(x)` near its middle and a length scale of `K(x)`, used to
    /// generate samples that hit both the interior and the boundary.
    pub fn reference_point(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        match &self.kind {
            ConstraintKind::Rectangle { lower, upper } => {
                let (lo, hi) = Self::bounds(lower, upper, x, self.m);
                let c: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
                let half = hi.iter().zip(&lo).fold(0.0f64, |m, (b, a)| m.max(0.5 * (b - a)));
                Ok((c, half.max(1e-6)))
            }
            ConstraintKind::Tube { center, scale, base } => {
                let mut b = vec![0.0; self.m];
                center(x, &mut b);
                let a = scale(x);
                if let TubeBase::Rectangle { lower, upper } = base {
                    for k in 0..self.m {
                        b[k] += a * 0.5 * (lower[k] + upper[k]);
                    }
                }
                Ok((b, a.max(1e-6)))
            }
            ConstraintKind::Ellipsoid { shape, .. } => {
                Ok((vec![0.0; self.m], ellipsoid::envelope(&shape(x)).max(1e-6)))
            }
            ConstraintKind::Polyhedron { .. } | ConstraintKind::ConstantConvex(_) => {
                let c = self.project(x, &vec![0.0; self.m])?;
                let e = self.envelope_at(x);
                Ok((c, if e.is_finite() { e.max(1e-6) } else { 1.0 }))
            }
        }
    }

    /// Checks the field at every node of the full grid (ring included): bounds
    /// are ordered, `K(x)` is nonempty and projections are finite.
    pub fn validate_on(&self, grid: &GridDomain) -> Result<()> {
        let d = grid.dim();
        let zero = vec![0.0; self.m];
        for full in 0..grid.full_count() {
            let p = grid.multi_point(&grid.full_multi(full));
            let x = &p[..d];
            if let ConstraintKind::Rectangle { lower, upper } = &self.kind {
                let (lo, hi) = Self::bounds(lower, upper, x, self.m);
                if lo.iter().zip(&hi).any(|(a, b)| !(a <= b)) {
                    return Err(Error::InvalidConstraint(alloc::format!(
                        "lower bound exceeds upper bound at x = {x:?}"
                    )));
                }
            }
            let w = self.project(x, &zero)?;
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConstraint(alloc::format!("non-finite projection at x = {x:?}")));
            }
        }
        Ok(())
    }

    /// If this is a rectangle, its bound callables.
    pub fn rectangle_bounds(&self) -> Option<(&VectorFn, &VectorFn)> {
        match &self.kind {
            ConstraintKind::Rectangle { lower, upper } => Some((lower, upper)),
            _ => None,
        }
    }

    /// If this is a polyhedron, its faces.
    pub fn faces(&self) -> Option<&[HalfSpace]> {
        match &self.kind {
            ConstraintKind::Polyhedron { faces } => Some(faces),
            _ => None,
        }
    }

    /// Largest nodewise distance of `u` from the field, with the node attaining it.
    pub fn max_violation(&self, u: &crate::grid::VectorField) -> Result<(f64, usize)> {
        let g = u.grid();
        let d = g.dim();
        let dists = crate::par::map_range(u.nodes(), |i| {
            let p = g.point(i);
            self.distance(&p[..d], u.node(i))
        });
        let mut best = (0.0, 0);
        for (i, r) in dists.into_iter().enumerate() {
            let r = r?;
            if r > best.0 {
                best = (r, i);
            }
        }
        Ok(best)
    }

    /// Nodewise projection of a grid function.
    pub fn project_field(&self, u: &crate::grid::VectorField) -> Result<crate::grid::VectorField> {
        let g = *u.grid();
        let d = g.dim();
        let rows = crate::par::map_range(u.nodes(), |i| {
            let p = g.point(i);
            self.project(&p[..d], u.node(i))
        });
        let mut data = Vec::with_capacity(u.data().len());
        for r in rows {
            data.extend_from_slice(&r?);
        }
        crate::grid::VectorField::from_vec(g, self.m, data)
    }

    /// Euclidean length of the envelope as a grid function, `(Δx^N Σ m(x)²)^{1/2}`.
    pub fn envelope_l2(&self, grid: &GridDomain) -> f64 {
        let d = grid.dim();
        let s: f64 = (0..grid.node_count())
            .map(|i| {
                let p = grid.point(i);
                let e = self.envelope_at(&p[..d]);
                e * e
            })
            .sum();
        math::sqrt(s * grid.cell_volume())
    }
}

impl core::fmt::Debug for ConstraintField {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ConstraintField").field("variant", &self.variant_name()).field("components", &self.m).finish()
    }
}

/// Human-readable description, used in reports.
pub fn describe(field: &ConstraintField) -> String {
    alloc::format!("{} (M = {})", field.variant_name(), field.components())
}
