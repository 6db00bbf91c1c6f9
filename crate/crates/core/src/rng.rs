//! Seeded random streams.
//!
//! Every sample that may be computed on a worker thread draws from its own stream,
//! addressed by `(seed, stream)`, so results are independent of scheduling.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::math;

pub struct SampleRng {
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl SampleRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner, spare: None }
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.inner.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal variate (Box-Muller).
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = math::sqrt(-2.0 * math::ln(u1));
        let a = 2.0 * core::f64::consts::PI * u2;
        self.spare = Some(r * math::sin(a));
        r * math::cos(a)
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.normal();
        }
    }

    /// Uniformly distributed unit vector.
    pub fn unit_vector(&mut self, out: &mut [f64]) {
        loop {
            self.fill_normal(out);
            let n = math::norm(out);
            if n > 1e-12 {
                out.iter_mut().for_each(|v| *v /= n);
                return;
            }
        }
    }
}
