//! Error type shared by every module of the crate.

use alloc::string::String;
use alloc::vec::Vec;

/// Result alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("ellipsoid shape matrix is ill-conditioned at x = {x:?} (det = {det:e})")]
    EllipsoidIllConditioned { x: Vec<f64>, det: f64 },
    #[error("polyhedron is empty at x = {x:?}")]
    EmptyPolyhedron { x: Vec<f64> },
    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),
    #[error("base point lies outside the constraint set (distance {distance:e})")]
    NotInConstraint { distance: f64 },
    #[error("projection did not terminate: {0}")]
    ProjectionFailed(String),
    #[error("Legendre condition fails at x = {x:?} (smallest eigenvalue {value:e})")]
    EllipticityViolation { x: Vec<f64>, value: f64 },
    #[error("non-finite coefficient {name} at x = {x:?}")]
    NonFiniteCoefficient { name: String, x: Vec<f64> },
    #[error("fields live on different grids or have different component counts")]
    GridMismatch,
    #[error("eigenvalue solver failed: {0}")]
    EigSolverFailure(String),
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("step h = {h} is inadmissible (h * omega = {product})")]
    InadmissibleStep { h: f64, product: f64 },
    #[error("forcing term is not finite at node {node}")]
    NonFiniteForcing { node: usize },
    #[error("exponent out of range: {0}")]
    ExponentOutOfRange(String),
    #[error("the map vanishes on the box boundary near {point:?}")]
    ZeroOnBoundary { point: Vec<f64> },
    #[error("degenerate zero at {point:?} (Jacobian determinant {det:e})")]
    DegenerateZero { point: Vec<f64>, det: f64 },
    #[error("truncation level {level} failed: {reason}")]
    LevelSolveFailed { level: usize, reason: String },
    #[error("successive differences stopped decreasing at level {level}")]
    TailStagnation { level: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
