//! Linear algebra kernels: small dense blocks, CSR matrices, a banded direct
//! solver, Krylov fallbacks and an extreme-eigenvalue routine.

pub mod banded;
pub mod dense;
pub mod eigen;
pub mod krylov;
pub mod sparse;

use alloc::vec::Vec;

pub use banded::BandedLu;
pub use dense::Mat;
pub use sparse::CsrMatrix;

use crate::error::Result;
use crate::math;

/// Band storage (in `f64` entries) above which the direct solver is not used.
pub const DIRECT_STORAGE_LIMIT: usize = 24_000_000;
/// Relative residual tolerance of the iterative fallbacks.
pub const ITERATIVE_TOL: f64 = 1e-12;

/// Solver for a fixed square sparse matrix: banded LU when the band fits in
/// memory, otherwise conjugate gradients (symmetric) or BiCGSTAB.
pub enum LinearSolver {
    Banded(BandedLu),
    Iterative { matrix: CsrMatrix, symmetric: bool },
}

impl LinearSolver {
    pub fn new(a: CsrMatrix) -> Result<Self> {
        let (kl, ku) = a.bandwidths();
        if BandedLu::storage_for(a.nrows(), kl, ku) <= DIRECT_STORAGE_LIMIT {
            return Ok(Self::Banded(BandedLu::factor(&a)?));
        }
        let scale = a.iter().fold(0.0f64, |m, (_, _, v)| m.max(math::abs(v)));
        let symmetric = a.asymmetry() <= 1e-14 * scale;
        Ok(Self::Iterative { matrix: a, symmetric })
    }

    pub fn is_direct(&self) -> bool {
        matches!(self, Self::Banded(_))
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Banded(lu) => {
                let mut x = b.to_vec();
                lu.solve_in_place(&mut x);
                Ok(x)
            }
            Self::Iterative { matrix, symmetric } => {
                let max_iter = 20 * matrix.nrows() + 1000;
                if *symmetric {
                    krylov::conjugate_gradient(matrix, b, ITERATIVE_TOL, max_iter)
                } else {
                    krylov::bicgstab(matrix, b, ITERATIVE_TOL, max_iter)
                }
            }
        }
    }
}
