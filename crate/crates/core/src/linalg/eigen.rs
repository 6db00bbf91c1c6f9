//! Smallest eigenvalue of a sparse symmetric matrix.
//!
//! Small matrices go through a dense Jacobi sweep. Larger ones use Lanczos with
//! full reorthogonalization on the shifted inverse `(A − μI)^{-1}`, where `μ`
//! sits below the Gershgorin bound so the shifted matrix is positive definite.
//! The returned lower bound widens the Ritz value by its residual.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::dense::{sym_eigen, Mat};
use super::sparse::CsrMatrix;
use super::LinearSolver;
use crate::error::{Error, Result};
use crate::math;
use crate::rng::SampleRng;

const DENSE_LIMIT: usize = 160;
const MAX_STEPS: usize = 150;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenBound {
    /// Approximation of the smallest eigenvalue.
    pub value: f64,
    /// A value not above the smallest eigenvalue, up to rounding.
    pub lower: f64,
    pub steps: usize,
}

pub fn smallest_eigenvalue(a: &CsrMatrix, seed: u64) -> Result<EigenBound> {
    let n = a.nrows();
    if n == 0 {
        return Err(Error::EigSolverFailure("empty matrix".into()));
    }
    if n <= DENSE_LIMIT {
        let mut d = Mat::zeros(n, n);
        for (i, j, v) in a.iter() {
            d[(i, j)] = v;
        }
        let (vals, _) = sym_eigen(&d);
        let scale = d.max_abs().max(1.0);
        return Ok(EigenBound { value: vals[0], lower: vals[0] - 1e-12 * scale, steps: n });
    }
    let g = a.gershgorin_lower();
    let scale = a.diagonal().iter().fold(1.0f64, |m, &v| m.max(math::abs(v)));
    let mu = g - 1e-3 * scale;
    let shifted = a.linear_combination(1.0, &CsrMatrix::identity(n), -mu);
    let solver = LinearSolver::new(shifted)?;

    let mut rng = SampleRng::new(seed, 0x01a2_c205);
    let mut q = vec![0.0; n];
    rng.unit_vector(&mut q);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let kmax = MAX_STEPS.min(n);
    let mut best = (0.0, f64::INFINITY);
    for k in 0..kmax {
        let mut w = solver.solve(&basis[k])?;
        let alpha = math::dot(&basis[k], &w);
        alphas.push(alpha);
        for _ in 0..2 {
            for b in &basis {
                let c = math::dot(b, &w);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
        }
        let beta = math::norm(&w);
        let check = k + 1 == kmax || beta <= 1e-14 * math::abs(alpha).max(1e-300) || (k + 1) % 5 == 0;
        if check {
            let m = alphas.len();
            let mut t = Mat::zeros(m, m);
            for i in 0..m {
                t[(i, i)] = alphas[i];
                if i + 1 < m {
                    t[(i, i + 1)] = betas[i];
                    t[(i + 1, i)] = betas[i];
                }
            }
            let (vals, vecs) = sym_eigen(&t);
            let theta = vals[m - 1];
            let resid = beta * math::abs(vecs[(m - 1, m - 1)]);
            best = (theta, resid);
            if theta > 0.0 && (resid <= 1e-13 * theta || beta <= 1e-14 * theta) {
                return Ok(finish(mu, theta, resid, k + 1));
            }
        }
        if beta <= 1e-300 {
            break;
        }
        betas.push(beta);
        basis.push(w.iter().map(|v| v / beta).collect());
    }
    let (theta, resid) = best;
    if theta > 0.0 && resid <= 1e-8 * theta {
        Ok(finish(mu, theta, resid, kmax))
    } else {
        Err(Error::EigSolverFailure(format!(
            "Lanczos did not converge (ritz value {theta:e}, residual {resid:e})"
        )))
    }
}

fn finish(mu: f64, theta: f64, resid: f64, steps: usize) -> EigenBound {
    EigenBound { value: mu + 1.0 / theta, lower: mu + 1.0 / (theta + resid), steps }
}
