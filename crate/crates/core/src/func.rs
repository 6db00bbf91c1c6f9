//! Shared callable types for coefficients, bounds and envelopes.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::linalg::Mat;

/// `x ↦ R`.
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// `x ↦ R^M`, written into the output slice.
pub type VectorFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// `x ↦ R^{M×M}`.
pub type MatrixFn = Arc<dyn Fn(&[f64]) -> Mat + Send + Sync>;

pub fn constant_scalar(c: f64) -> ScalarFn {
    Arc::new(move |_| c)
}

pub fn constant_vector(v: &[f64]) -> VectorFn {
    let v: Vec<f64> = v.to_vec();
    Arc::new(move |_, out| out.copy_from_slice(&v))
}

pub fn constant_matrix(m: Mat) -> MatrixFn {
    Arc::new(move |_| m.clone())
}

pub fn scalar_fn(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> ScalarFn {
    Arc::new(f)
}

pub fn vector_fn(f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> VectorFn {
    Arc::new(f)
}

pub fn matrix_fn(f: impl Fn(&[f64]) -> Mat + Send + Sync + 'static) -> MatrixFn {
    Arc::new(f)
}
