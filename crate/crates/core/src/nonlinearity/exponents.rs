//! Interpolation exponents of the a-priori estimates.
//!
//! With `θ₁`, `θ̃₁`, `θ₂` determined by
//! `(s/2) θ₁ = (N/4)(s − 1)`, `s θ̃₁ = (N/4)(s − 1)`, `(q/2) θ₂ = (N/4)(q − 1)`,
//! the growth exponents enter the estimates through
//! `γ₁ = s θ₁ / 2` (`N ≤ 4`) or `γ₁ = s θ̃₁` (`N ≥ 5`), `γ₂ = q (1 + θ₂) / 2`,
//! and the embedding exponent `p = max{2q, (1/(2s) + 1/N)^{-1}}`.

use alloc::format;

use serde::Serialize;

use crate::error::{Error, Result};

/// Upper bound `(N + 4)/N` on the growth exponent in `u`.
pub fn s_bound(n: usize) -> f64 {
    (n as f64 + 4.0) / n as f64
}

/// Upper bound `(N + 4)/(N + 2)` on the growth exponent in `∂u`.
pub fn q_bound(n: usize) -> f64 {
    (n as f64 + 4.0) / (n as f64 + 2.0)
}

/// Checks `1 ≤ s < (N+4)/N` and `1 ≤ q < (N+4)/(N+2)`.
pub fn check_admissible(s: f64, q: f64, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::ExponentOutOfRange("dimension must be positive".into()));
    }
    if !(s >= 1.0 && s < s_bound(n)) {
        return Err(Error::ExponentOutOfRange(format!("s = {s} must satisfy 1 <= s < (N+4)/N = {}", s_bound(n))));
    }
    if !(q >= 1.0 && q < q_bound(n)) {
        return Err(Error::ExponentOutOfRange(format!("q = {q} must satisfy 1 <= q < (N+4)/(N+2) = {}", q_bound(n))));
    }
    Ok(())
}

/// Exponents of the a-priori bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AprioriExponents {
    pub n: usize,
    pub s: f64,
    pub q: f64,
    pub theta1: f64,
    pub theta1_tilde: f64,
    pub theta2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub p_embed: f64,
}

impl AprioriExponents {
    /// `2N/(N−2)` for `N ≥ 3`, `+∞` otherwise.
    pub fn critical_sobolev(&self) -> f64 {
        if self.n >= 3 {
            2.0 * self.n as f64 / (self.n as f64 - 2.0)
        } else {
            f64::INFINITY
        }
    }

    /// `2 ≤ p < min{2N/(N−2), N}`; only meaningful for `N ≥ 3`.
    pub fn p_in_range(&self) -> bool {
        self.p_embed >= 2.0 && self.p_embed < self.critical_sobolev().min(self.n as f64)
    }
}

/// Computes `(γ₁, γ₂, p)` for admissible `(s, q, N)`. For `N ≥ 3` the
/// embedding exponent must also lie in `[2, min{2N/(N−2), N})`.
pub fn compute_apriori_exponents(s: f64, q: f64, n: usize) -> Result<AprioriExponents> {
    check_admissible(s, q, n)?;
    let nf = n as f64;
    let theta1 = nf * (s - 1.0) / (2.0 * s);
    let theta1_tilde = nf * (s - 1.0) / (4.0 * s);
    let theta2 = nf * (q - 1.0) / (2.0 * q);
    let gamma1 = if n >= 5 { s * theta1_tilde } else { 0.5 * s * theta1 };
    let gamma2 = 0.5 * q * (1.0 + theta2);
    let p_embed = (2.0 * q).max(1.0 / (1.0 / (2.0 * s) + 1.0 / nf));
    let e = AprioriExponents { n, s, q, theta1, theta1_tilde, theta2, gamma1, gamma2, p_embed };
    if !(gamma1 < 1.0 && gamma2 < 1.0) {
        return Err(Error::ExponentOutOfRange(format!("gamma1 = {gamma1}, gamma2 = {gamma2} not below 1")));
    }
    if n >= 3 && !e.p_in_range() {
        return Err(Error::ExponentOutOfRange(format!(
            "p = {p_embed} outside [2, min(2N/(N-2), N))"
        )));
    }
    Ok(e)
}
