//! Projection onto `{w : ⟨p_j, w⟩ ≤ ξ_j}` by the dual active-set method of
//! Goldfarb and Idnani, specialised to the identity Hessian.
//!
//! The iteration starts at the unconstrained minimizer `w = u` and adds the most
//! violated constraint at each outer step, dropping active constraints whose
//! multipliers would turn negative. A violated constraint that can be neither
//! satisfied nor made room for proves the intersection empty.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Orthonormal basis of the active normals with the triangular factor
/// (modified Gram-Schmidt, recomputed from scratch: the sets are tiny).
struct ActiveQr {
    q: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
}

impl ActiveQr {
    fn new(cols: &[&[f64]]) -> Self {
        let k = cols.len();
        let mut q: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut r = vec![vec![0.0; k]; k];
        for (j, col) in cols.iter().enumerate() {
            let mut v = col.to_vec();
            for (i, qi) in q.iter().enumerate() {
                let c = math::dot(qi, &v);
                r[i][j] = c;
                for (a, b) in v.iter_mut().zip(qi) {
                    *a -= c * b;
                }
            }
            let nv = math::norm(&v);
            r[j][j] = nv;
            q.push(v.iter().map(|x| x / nv).collect());
        }
        Self { q, r }
    }

    /// Returns `(z, r)` with `z = (I − QQᵀ) n` and `r = R⁻¹Qᵀn`.
    fn split(&self, n: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k = self.q.len();
        let mut z = n.to_vec();
        let mut d = vec![0.0; k];
        for (i, qi) in self.q.iter().enumerate() {
            d[i] = math::dot(qi, n);
            for (a, b) in z.iter_mut().zip(qi) {
                *a -= d[i] * b;
            }
        }
        let mut r = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = d[i];
            for j in i + 1..k {
                s -= self.r[i][j] * r[j];
            }
            r[i] = s / self.r[i][i];
        }
        (z, r)
    }
}

pub(crate) fn project(normals: &[&[f64]], offsets: &[f64], u: &[f64], out: &mut [f64], x: &[f64]) -> Result<()> {
    let nf = normals.len();
    out.copy_from_slice(u);
    if nf == 0 {
        return Ok(());
    }
    if nf == 1 {
        let excess = math::dot(normals[0], u) - offsets[0];
        if excess > 0.0 {
            for (o, p) in out.iter_mut().zip(normals[0]) {
                *o -= excess * p;
            }
        }
        return Ok(());
    }
    // Constraints in Goldfarb-Idnani orientation: ⟨n_j, w⟩ ≥ b_j with n = −p, b = −ξ.
    let neg: Vec<Vec<f64>> = normals.iter().map(|p| p.iter().map(|v| -v).collect()).collect();
    let mut active: Vec<usize> = Vec::new();
    let mut lambda: Vec<f64> = Vec::new();
    let scale = 1.0 + math::norm(u) + offsets.iter().fold(0.0f64, |m, v| m.max(math::abs(*v)));
    let tol = 1e-13 * scale;
    let max_steps = 50 * (nf + u.len()) + 100;
    let mut steps = 0;
    loop {
        let mut pick = None;
        let mut worst = -tol;
        for j in 0..nf {
            if active.contains(&j) {
                continue;
            }
            let s = offsets[j] - math::dot(normals[j], out);
            if s < worst {
                worst = s;
                pick = Some(j);
            }
        }
        let Some(j) = pick else { return Ok(()) };
        let mut lam_plus = 0.0;
        loop {
            steps += 1;
            if steps > max_steps {
                return Err(Error::ProjectionFailed("active-set iteration limit".into()));
            }
            let cols: Vec<&[f64]> = active.iter().map(|&a| neg[a].as_slice()).collect();
            let qr = ActiveQr::new(&cols);
            let (z, r) = qr.split(&neg[j]);
            let s = math::dot(&neg[j], out) + offsets[j];
            let zn = math::dot(&z, &neg[j]);
            let t1 = if math::norm(&z) > 1e-12 && zn > 0.0 { -s / zn } else { f64::INFINITY };
            let mut t2 = f64::INFINITY;
            let mut drop = None;
            for (i, &ri) in r.iter().enumerate() {
                if ri > 1e-14 {
                    let t = lambda[i] / ri;
                    if t < t2 {
                        t2 = t;
                        drop = Some(i);
                    }
                }
            }
            if !t1.is_finite() && !t2.is_finite() {
                return Err(Error::EmptyPolyhedron { x: x.to_vec() });
            }
            if t2 < t1 {
                if t1.is_finite() {
                    for (o, zi) in out.iter_mut().zip(&z) {
                        *o += t2 * zi;
                    }
                }
                for (l, ri) in lambda.iter_mut().zip(&r) {
                    *l -= t2 * ri;
                }
                lam_plus += t2;
                let k = drop.unwrap();
                active.remove(k);
                lambda.remove(k);
            } else {
                for (o, zi) in out.iter_mut().zip(&z) {
                    *o += t1 * zi;
                }
                for (l, ri) in lambda.iter_mut().zip(&r) {
                    *l -= t1 * ri;
                }
                lam_plus += t1;
                active.push(j);
                lambda.push(lam_plus);
                break;
            }
        }
    }
}
