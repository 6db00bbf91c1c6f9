//! Sufficient conditions for `J_h(K) ⊂ K` when `K(x)` is an intersection of
//! half-spaces `⟨p, u⟩ ≤ ξ_p(x)`:
//!
//! * every normal `p` is a common eigenvector of the transposed coefficients;
//! * `B[ξ_p p, η p] ≥ 0` for all nonnegative `η ∈ H¹₀`, with `ξ_p ≥ 0` on `∂Ω`;
//! * for diagonal operators and rectangles `σ ≤ u ≤ τ`, the componentwise
//!   version `B_k[σ_k, η] ≤ 0 ≤ B_k[τ_k, η]`.
//!
//! Nonnegative discrete test functions are nonnegative combinations of nodal
//! hats, so the form conditions are checked hat by hat. The discrete check also
//! asks the reduced scalar stencil `pᵀ S p` to have nonpositive off-diagonal
//! entries.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::Serialize;

use crate::constraint::{ConstraintField, ConstraintKind};
use crate::func::{ScalarFn, VectorFn};
use crate::grid::{GridDomain, MAX_DIM};
use crate::linalg::Mat;
use crate::math;
use crate::operator::{assemble, AssembledOperator, OperatorCoefficients};

/// Relative tolerance of the eigenvector test.
pub const EIGEN_TOL: f64 = 1e-10;
/// Relative tolerance of the form-sign tests.
pub const FORM_TOL: f64 = 1e-10;
const MAX_SAMPLE_NODES: usize = 4096;
const MAX_WITNESSES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionId {
    Eigenvector,
    FormSign,
    Mueller,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CriterionStatus {
    Pass,
    Fail,
    NotApplicable,
}

/// Where and by how much a criterion fails.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub x: Vec<f64>,
    pub normal: Vec<f64>,
    /// Which coefficient or inequality failed, e.g. `"A^{12}"`, `"hat"`, `"trace"`.
    pub label: String,
    /// For the eigenvector test, the unit vector along the part of `ᵀA p`
    /// orthogonal to `p`; otherwise empty.
    pub defect: Vec<f64>,
    /// Relative defect (eigenvector test) or the offending value.
    pub value: f64,
}

/// Scalars `ᵀA^{ij} p = a^{ij} p`, `ᵀB^i p = b^i p`, `ᵀC p = c p` at one point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EigenScalars {
    pub normal: Vec<f64>,
    pub x: Vec<f64>,
    /// `a[i * N + j]`.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriterionReport {
    pub criterion: CriterionId,
    pub status: CriterionStatus,
    pub witnesses: Vec<Witness>,
    /// Smallest slack, nonnegative on PASS. For the form tests this is the
    /// smallest hat value divided by `Δx^N`.
    pub margin: Option<f64>,
    pub notes: Vec<String>,
    pub scalars: Vec<EigenScalars>,
}

impl CriterionReport {
    fn new(criterion: CriterionId) -> Self {
        Self { criterion, status: CriterionStatus::Pass, witnesses: Vec::new(), margin: None, notes: Vec::new(), scalars: Vec::new() }
    }

    fn not_applicable(criterion: CriterionId, why: &str) -> Self {
        let mut r = Self::new(criterion);
        r.status = CriterionStatus::NotApplicable;
        r.notes.push(why.into());
        r
    }

    pub fn passed(&self) -> bool {
        self.status == CriterionStatus::Pass
    }

    fn fail(&mut self, w: Witness) {
        self.status = CriterionStatus::Fail;
        if self.witnesses.len() < MAX_WITNESSES {
            self.witnesses.push(w);
        }
    }
}

/// Points where coefficients enter the assembly: full-grid nodes, face
/// midpoints and cell centres (thinned out on large grids).
fn sample_points(grid: &GridDomain) -> Vec<[f64; MAX_DIM]> {
    let d = grid.dim();
    let h = grid.spacing();
    let stride = (grid.full_count() / MAX_SAMPLE_NODES).max(1);
    let mut pts = Vec::new();
    for full in (0..grid.full_count()).step_by(stride) {
        let p = grid.multi_point(&grid.full_multi(full));
        pts.push(p);
        let mut centre = p;
        for i in 0..d {
            let mut q = p;
            q[i] += 0.5 * h;
            pts.push(q);
            centre[i] += 0.5 * h;
        }
        if d > 1 {
            pts.push(centre);
        }
    }
    pts
}

/// `ᵀM p − ⟨p, ᵀM p⟩ p` and the Rayleigh quotient.
fn eigen_defect(m: &Mat, p: &[f64]) -> (Vec<f64>, f64, f64) {
    let mp = m.tmul_vec(p);
    let lam = math::dot(&mp, p) / math::dot(p, p);
    let defect: Vec<f64> = mp.iter().zip(p).map(|(a, b)| a - lam * b).collect();
    let rel = math::norm(&defect) / math::norm(&mp).max(f64::MIN_POSITIVE);
    (defect, lam, rel)
}

/// Scalars of the eigenvector condition at `x`, or `None` if some transposed
/// coefficient does not have `p` as an eigenvector.
pub fn eigen_scalars(coeffs: &OperatorCoefficients, p: &[f64], x: &[f64]) -> Option<EigenScalars> {
    let d = coeffs.dim();
    let mut a = vec![0.0; d * d];
    let mut b = vec![0.0; d];
    for i in 0..d {
        for j in 0..d {
            let (_, lam, rel) = eigen_defect(&coeffs.a(i, j, x), p);
            if rel > EIGEN_TOL {
                return None;
            }
            a[i * d + j] = lam;
        }
        let (_, lam, rel) = eigen_defect(&coeffs.b(i, x), p);
        if rel > EIGEN_TOL {
            return None;
        }
        b[i] = lam;
    }
    let (_, c, rel) = eigen_defect(&coeffs.c(x), p);
    if rel > EIGEN_TOL {
        return None;
    }
    Some(EigenScalars { normal: p.to_vec(), x: x.to_vec(), a, b, c })
}

/// Tests that every `p` in `normals` is an eigenvector of each `ᵀA^{ij}`,
/// `ᵀB^i` and `ᵀC`, within [`EIGEN_TOL`] relative, at the sample points.
pub fn check_eigenvector_conditions(
    coeffs: &OperatorCoefficients,
    normals: &[Vec<f64>],
    grid: &GridDomain,
) -> CriterionReport {
    if normals.is_empty() {
        return CriterionReport::not_applicable(CriterionId::Eigenvector, "no normals given");
    }
    let d = coeffs.dim();
    let mut rep = CriterionReport::new(CriterionId::Eigenvector);
    let pts = sample_points(grid);
    let mut worst = 0.0f64;
    for p in normals {
        let mut fails = false;
        for q in &pts {
            let x = &q[..d];
            let mut blocks: Vec<(String, Mat)> = Vec::new();
            for i in 0..d {
                for j in 0..d {
                    if coeffs.has_a(i, j) {
                        blocks.push((format!("A^{{{}{}}}", i + 1, j + 1), coeffs.a(i, j, x)));
                    }
                }
                if coeffs.has_drift(i) {
                    blocks.push((format!("B^{}", i + 1), coeffs.b(i, x)));
                }
            }
            blocks.push(("C".into(), coeffs.c(x)));
            for (label, m) in blocks {
                let (defect, _, rel) = eigen_defect(&m, p);
                worst = worst.max(rel);
                if rel > EIGEN_TOL {
                    let nd = math::norm(&defect);
                    rep.fail(Witness {
                        x: x.to_vec(),
                        normal: p.clone(),
                        label,
                        defect: defect.iter().map(|v| v / nd).collect(),
                        value: rel,
                    });
                    fails = true;
                    break;
                }
            }
            if fails {
                break;
            }
        }
        if !fails {
            let mid = grid.point(grid.node_count() / 2);
            if let Some(s) = eigen_scalars(coeffs, p, &mid[..d]) {
                rep.scalars.push(s);
            }
        }
    }
    if rep.passed() {
        rep.margin = Some(EIGEN_TOL - worst);
    }
    rep
}

/// Result of scanning all hats for one normal.
struct FormScan {
    min_value: f64,
    witnesses: Vec<Witness>,
    notes: Vec<String>,
}

/// Hat-by-hat scan of `B[ξ p, η_i p] ≥ 0`, the trace condition `ξ ≥ 0` on the
/// ring and the sign of the reduced off-diagonal stencil.
fn scan_form(op: &AssembledOperator, p: &[f64], xi: &dyn Fn(&[f64]) -> f64, label: &str) -> FormScan {
    let grid = *op.grid();
    let d = grid.dim();
    let m = op.components();
    let vol = grid.cell_volume();
    let mut values = vec![0.0; grid.full_count() * m];
    for full in 0..grid.full_count() {
        let q = grid.multi_point(&grid.full_multi(full));
        let s = xi(&q[..d]);
        for k in 0..m {
            values[full * m + k] = s * p[k];
        }
    }
    let mut scan = FormScan { min_value: f64::INFINITY, witnesses: Vec::new(), notes: Vec::new() };
    let push = |scan: &mut FormScan, w: Witness| {
        if scan.witnesses.len() < MAX_WITNESSES {
            scan.witnesses.push(w);
        }
    };

    for full in 0..grid.full_count() {
        let mi = grid.full_multi(full);
        if grid.is_boundary(&mi) {
            let s = math::dot(&values[full * m..(full + 1) * m], p);
            if s < 0.0 {
                let q = grid.multi_point(&mi);
                push(&mut scan, Witness { x: q[..d].to_vec(), normal: p.to_vec(), label: format!("{label}: trace"), defect: Vec::new(), value: s });
            }
        }
    }

    let applied = op.apply_full(&values);
    let interior_of = |node: usize| grid.full_index(&grid.multi_index(node));
    let st = op.stiffness();
    let bd = op.boundary_coupling();
    for node in 0..grid.node_count() {
        let mut value = 0.0;
        let mut scale = 0.0;
        for k in 0..m {
            let r = node * m + k;
            value += p[k] * applied[r];
            let (cols, vals) = st.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let cf = interior_of(c / m) * m + c % m;
                scale += math::abs(p[k] * v * values[cf]);
            }
            let (cols, vals) = bd.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                scale += math::abs(p[k] * v * values[c]);
            }
        }
        value *= vol;
        scale *= vol;
        scan.min_value = scan.min_value.min(value / vol);
        if value < -FORM_TOL * scale {
            let q = grid.point(node);
            push(&mut scan, Witness { x: q[..d].to_vec(), normal: p.to_vec(), label: format!("{label}: hat"), defect: Vec::new(), value: value / vol });
        }

        // Reduced stencil pᵀ S_{node, col} p off the diagonal.
        let mut reduced: Vec<(usize, f64)> = Vec::new();
        let mut diag_scale = 0.0;
        for k in 0..m {
            let r = node * m + k;
            let (cols, vals) = st.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let w = p[k] * v * p[c % m];
                if c / m == node {
                    diag_scale += math::abs(w);
                } else {
                    reduced.push((c / m, w));
                }
            }
            let (cols, vals) = bd.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                reduced.push((usize::MAX - c / m, p[k] * v * p[c % m]));
            }
        }
        reduced.sort_by_key(|e| e.0);
        let mut i = 0;
        while i < reduced.len() {
            let col = reduced[i].0;
            let mut s = 0.0;
            while i < reduced.len() && reduced[i].0 == col {
                s += reduced[i].1;
                i += 1;
            }
            if s > FORM_TOL * diag_scale.max(f64::MIN_POSITIVE) {
                let q = grid.point(node);
                push(&mut scan, Witness { x: q[..d].to_vec(), normal: p.to_vec(), label: format!("{label}: positive off-diagonal stencil"), defect: Vec::new(), value: s });
                break;
            }
        }
    }
    if scan.min_value == f64::INFINITY {
        scan.min_value = 0.0;
    }
    scan
}

fn finish_form(rep: &mut CriterionReport, scans: Vec<FormScan>) {
    let mut min_value = f64::INFINITY;
    for s in scans {
        min_value = min_value.min(s.min_value);
        rep.notes.extend(s.notes);
        for w in s.witnesses {
            rep.fail(w);
        }
    }
    if rep.passed() {
        rep.margin = Some(min_value.max(0.0));
    }
}

/// `B[ξ_p p, η p] ≥ 0` for every nonnegative hat `η`, plus `ξ_p ≥ 0` on the
/// ring. NOT_APPLICABLE if `p` fails the eigenvector test or the operator
/// cannot be assembled.
pub fn check_form_sign(coeffs: &OperatorCoefficients, grid: &GridDomain, p: &[f64], xi: &ScalarFn) -> CriterionReport {
    let eig = check_eigenvector_conditions(coeffs, &[p.to_vec()], grid);
    if !eig.passed() {
        return CriterionReport::not_applicable(CriterionId::FormSign, "p is not a common eigenvector of the transposed coefficients");
    }
    let op = match assemble(coeffs, grid) {
        Ok(op) => op,
        Err(e) => return CriterionReport::not_applicable(CriterionId::FormSign, &format!("assembly failed: {e}")),
    };
    form_sign_on(&op, p, xi)
}

/// [`check_form_sign`] on an already assembled operator, without the
/// eigenvector precondition.
pub fn form_sign_on(op: &AssembledOperator, p: &[f64], xi: &ScalarFn) -> CriterionReport {
    let mut rep = CriterionReport::new(CriterionId::FormSign);
    let scan = scan_form(op, p, &|x| xi(x), "xi_p");
    finish_form(&mut rep, vec![scan]);
    rep
}

/// Componentwise conditions for diagonal operators and `σ ≤ u ≤ τ`:
/// `B_k[τ_k, η] ≥ 0`, `B_k[σ_k, η] ≤ 0` for nonnegative hats and
/// `σ ≤ 0 ≤ τ` on the ring.
pub fn check_mueller(coeffs: &OperatorCoefficients, grid: &GridDomain, sigma: &VectorFn, tau: &VectorFn) -> CriterionReport {
    if !coeffs.is_diagonal_on(grid) {
        return CriterionReport::not_applicable(CriterionId::Mueller, "operator is not diagonal");
    }
    let op = match assemble(coeffs, grid) {
        Ok(op) => op,
        Err(e) => return CriterionReport::not_applicable(CriterionId::Mueller, &format!("assembly failed: {e}")),
    };
    let m = coeffs.components();
    let mut rep = CriterionReport::new(CriterionId::Mueller);
    let mut scans = Vec::with_capacity(2 * m);
    for k in 0..m {
        let mut e = vec![0.0; m];
        e[k] = 1.0;
        let upper = |x: &[f64]| {
            let mut t = vec![0.0; m];
            tau(x, &mut t);
            t[k]
        };
        scans.push(scan_form(&op, &e, &upper, &format!("tau_{}", k + 1)));
        e[k] = -1.0;
        let lower = |x: &[f64]| {
            let mut s = vec![0.0; m];
            sigma(x, &mut s);
            -s[k]
        };
        scans.push(scan_form(&op, &e, &lower, &format!("sigma_{}", k + 1)));
    }
    finish_form(&mut rep, scans);
    rep
}

/// Runs every criterion that applies to `field`: rectangles get the Müller
/// test (diagonal operators) and the eigenvector/form-sign pair on the normals
/// `±e_k`; polyhedra get the eigenvector/form-sign pair on their faces. The
/// form-sign report covers all normals at once.
pub fn check_constraint(coeffs: &OperatorCoefficients, grid: &GridDomain, field: &ConstraintField) -> Vec<CriterionReport> {
    let m = field.components();
    let mut normals: Vec<Vec<f64>> = Vec::new();
    let mut offsets: Vec<ScalarFn> = Vec::new();
    let mut out = Vec::new();
    match field.kind() {
        ConstraintKind::Rectangle { lower, upper } => {
            out.push(check_mueller(coeffs, grid, lower, upper));
            for k in 0..m {
                let mut e = vec![0.0; m];
                e[k] = 1.0;
                normals.push(e.clone());
                let up = upper.clone();
                offsets.push(alloc::sync::Arc::new(move |x: &[f64]| {
                    let mut t = vec![0.0; e.len()];
                    up(x, &mut t);
                    t[k]
                }));
                let mut e = vec![0.0; m];
                e[k] = -1.0;
                normals.push(e);
                let lo = lower.clone();
                offsets.push(alloc::sync::Arc::new(move |x: &[f64]| {
                    let mut s = vec![0.0; m];
                    lo(x, &mut s);
                    -s[k]
                }));
            }
        }
        ConstraintKind::Polyhedron { faces } => {
            for f in faces {
                normals.push(f.normal.clone());
                offsets.push(f.offset.clone());
            }
        }
        _ => {
            out.push(CriterionReport::not_applicable(CriterionId::Eigenvector, "constraint is not given by half-spaces"));
            out.push(CriterionReport::not_applicable(CriterionId::FormSign, "constraint is not given by half-spaces"));
            return out;
        }
    }
    let eig = check_eigenvector_conditions(coeffs, &normals, grid);
    let form = if !eig.passed() {
        CriterionReport::not_applicable(CriterionId::FormSign, "eigenvector condition not satisfied")
    } else {
        match assemble(coeffs, grid) {
            Ok(op) => {
                let mut rep = CriterionReport::new(CriterionId::FormSign);
                let scans = normals
                    .iter()
                    .zip(&offsets)
                    .enumerate()
                    .map(|(i, (p, xi))| scan_form(&op, p, &|x| xi(x), &format!("face {}", i + 1)))
                    .collect();
                finish_form(&mut rep, scans);
                rep
            }
            Err(e) => CriterionReport::not_applicable(CriterionId::FormSign, &format!("assembly failed: {e}")),
        }
    };
    out.insert(0, eig);
    out.insert(1, form);
    out
}

/// True when the reports certify invariance: either the Müller test or both
/// the eigenvector and form-sign tests pass.
pub fn certifies_invariance(reports: &[CriterionReport]) -> bool {
    let get = |id| reports.iter().find(|r| r.criterion == id).is_some_and(|r| r.passed());
    get(CriterionId::Mueller) || (get(CriterionId::Eigenvector) && get(CriterionId::FormSign))
}
