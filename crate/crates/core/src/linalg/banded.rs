//! Banded LU factorization with partial pivoting, in the column-major band
//! layout used by LAPACK's `gbtrf` (with `kl` extra rows for pivot fill-in).

use alloc::vec;
use alloc::vec::Vec;

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};
use crate::math;

pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandedLu {
    /// Number of stored band entries `n·(2kl+ku+1)` for a matrix of this shape.
    pub fn storage_for(n: usize, kl: usize, ku: usize) -> usize {
        n * (2 * kl + ku + 1)
    }

    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols());
        let (kl, ku) = a.bandwidths();
        let ldab = 2 * kl + ku + 1;
        let mut lu = Self { n, kl, ku, ldab, ab: vec![0.0; n * ldab], ipiv: vec![0; n] };
        for (i, j, v) in a.iter() {
            *lu.at(i, j) = v;
        }
        lu.factor_in_place()?;
        Ok(lu)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.ldab + self.kl + self.ku + i - j
    }

    #[inline]
    fn at(&mut self, i: usize, j: usize) -> &mut f64 {
        let k = self.idx(i, j);
        &mut self.ab[k]
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.ab[self.idx(i, j)]
    }

    fn factor_in_place(&mut self) -> Result<()> {
        let (n, kl) = (self.n, self.kl);
        let kv = self.kl + self.ku;
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = math::abs(self.get(j, j));
            for t in 1..=km {
                let v = math::abs(self.get(j + t, j));
                if v > best {
                    best = v;
                    jp = t;
                }
            }
            self.ipiv[j] = j + jp;
            if !(best > 0.0) || !best.is_finite() {
                return Err(Error::SingularSystem(alloc::format!("zero pivot in column {j}")));
            }
            ju = ju.max((j + kv).min(n - 1).min(j + self.ku + jp));
            if jp != 0 {
                for c in j..=ju {
                    let a = self.idx(j, c);
                    let b = self.idx(j + jp, c);
                    self.ab.swap(a, b);
                }
            }
            let piv = self.get(j, j);
            for t in 1..=km {
                *self.at(j + t, j) /= piv;
            }
            for c in j + 1..=ju {
                let ajc = self.get(j, c);
                if ajc != 0.0 {
                    for t in 1..=km {
                        let l = self.get(j + t, j);
                        *self.at(j + t, c) -= l * ajc;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let kv = self.kl + self.ku;
        for j in 0..n {
            let km = self.kl.min(n - 1 - j);
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj != 0.0 {
                for t in 1..=km {
                    b[j + t] -= self.get(j + t, j) * bj;
                }
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.get(j, j);
            let bj = b[j];
            if bj != 0.0 {
                for i in j.saturating_sub(kv)..j {
                    b[i] -= self.get(i, j) * bj;
                }
            }
        }
    }
}
