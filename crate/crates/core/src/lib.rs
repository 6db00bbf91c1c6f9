//! Numerical core for semilinear elliptic systems `P[u] = f(x, u, ∂u)` posed under
//! pointwise convex constraints `u(x) ∈ K(x)`.
//!
//! The crate works on uniform tensor grids over boxes `[-R, R]^N` with homogeneous
//! Dirichlet data. It provides
//!
//! * exact metric projections and tangent-cone tests for moving rectangles, tubes,
//!   ellipsoidal funnels, polyhedra and user supplied constant convex sets ([`constraint`]);
//! * assembly of divergence-form operators and their bilinear forms ([`operator`]);
//! * resolvents `J_h = (I + hS)^{-1}` and sampled invariance verification ([`resolvent`]);
//! * sufficient invariance criteria for polyhedral and rectangular constraints ([`criteria`]);
//! * forcing terms, growth and tangency audits, a-priori exponent arithmetic
//!   ([`nonlinearity`]);
//! * the projected-resolvent fixed point solver and a small Brouwer degree checker
//!   ([`solver`]);
//! * expanding-domain truncation with tail monitoring ([`truncation`]).
//!
//! The crate is `no_std` (it needs `alloc`). The `parallel` feature enables `std` and
//! spreads nodewise work and verification samples over rayon; results do not depend
//! on the number of threads.
#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod constraint;
pub mod criteria;
pub mod error;
pub mod func;
pub mod grid;
pub mod linalg;
pub mod math;
pub mod nonlinearity;
pub mod operator;
pub mod resolvent;
pub mod rng;
pub mod solver;
pub mod truncation;

mod par;

pub use constraint::{ConstraintField, TangentQuery};
pub use error::{Error, Result};
pub use grid::{GridDomain, VectorField};
pub use nonlinearity::ForcingTerm;
pub use operator::{AssembledOperator, GardingEstimate, OperatorCoefficients};
pub use resolvent::ResolventHandle;
pub use solver::{SolveReport, SolverConfig, Termination};
