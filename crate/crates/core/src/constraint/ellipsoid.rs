//! Projection onto the ellipsoid `E·B = {w : |E⁻¹w| ≤ 1}`.
//!
//! Outside the set the minimizer of `½|u − w|²` satisfies `u − w = μQw` with
//! `Q = E⁻ᵀE⁻¹`, `μ > 0`. In the eigenbasis of `Q` the boundary condition becomes
//! the scalar equation `Σ λ_i c_i² / (1 + μλ_i)² = 1`, whose left side is convex
//! and decreasing in `μ`; Newton from `μ = 0` approaches the root from the left.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::dense::{determinant, inverse, sym_eigen};
use crate::linalg::Mat;
use crate::math;

pub(crate) struct EllipsoidFrame {
    pub einv: Mat,
}

impl EllipsoidFrame {
    pub fn new(e: &Mat, det_floor: f64, x: &[f64]) -> Result<Self> {
        let det = determinant(e);
        if !(det >= det_floor) {
            return Err(Error::EllipsoidIllConditioned { x: x.to_vec(), det });
        }
        let einv = inverse(e).ok_or(Error::EllipsoidIllConditioned { x: x.to_vec(), det })?;
        Ok(Self { einv })
    }

    /// `E⁻¹ u`.
    pub fn whiten(&self, u: &[f64]) -> Vec<f64> {
        self.einv.mul_vec(u)
    }

    pub fn project(&self, u: &[f64], out: &mut [f64]) -> Result<f64> {
        let z = self.whiten(u);
        if math::dot(&z, &z) <= 1.0 {
            out.copy_from_slice(u);
            return Ok(0.0);
        }
        let q = self.einv.transpose().matmul(&self.einv);
        let (lam, v) = sym_eigen(&q);
        let m = u.len();
        let c = v.tmul_vec(u);
        let phi = |mu: f64| -> (f64, f64) {
            let mut f = -1.0;
            let mut df = 0.0;
            for i in 0..m {
                let d = 1.0 + mu * lam[i];
                let t = lam[i] * c[i] * c[i];
                f += t / (d * d);
                df -= 2.0 * lam[i] * t / (d * d * d);
            }
            (f, df)
        };
        let mut mu = 0.0f64;
        let mut lo = 0.0f64;
        let mut hi = f64::INFINITY;
        for _ in 0..500 {
            let (f, df) = phi(mu);
            if f > 0.0 {
                lo = mu;
            } else {
                hi = mu;
            }
            if math::abs(f) <= 1e-15 {
                break;
            }
            let mut next = if df < 0.0 { mu - f / df } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * lo + 1.0 };
            }
            if next == mu {
                break;
            }
            mu = next;
        }
        let y: Vec<f64> = (0..m).map(|i| c[i] / (1.0 + mu * lam[i])).collect();
        let w = v.mul_vec(&y);
        out.copy_from_slice(&w);
        let s = math::norm(&self.whiten(out));
        if s > 1.0 {
            out.iter_mut().for_each(|o| *o /= s);
        }
        Ok(mu)
    }
}

/// Largest `|w|` over `E·B`.
pub(crate) fn envelope(e: &Mat) -> f64 {
    crate::linalg::dense::spectral_norm(e)
}
