use thiserror::Error;

use crate::expr::{DiffError, EvalError, ParseError};

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate domain: {0}")]
    DegenerateDomain(String),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("differentiation error: {0}")]
    Diff(#[from] DiffError),
    #[error("evaluation error: {0}")]
    Eval(#[from] EvalError),
    #[error("coefficient is not positive on triangle {triangle} (value {value})")]
    NonPositiveCoefficient { triangle: usize, value: f64 },
    #[error("coefficient branches are discontinuous at the kink: |a0 - a1| = {gap}")]
    DiscontinuousCoefficient { gap: f64 },
    #[error("coefficient is negative at y = {at} (value {value})")]
    NegativeCoefficient { at: f64, value: f64 },
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    LinearSolve { iterations: usize, residual: f64 },
    #[error("nonlinear iteration did not converge after {iterations} iterations (increment {increment:e})")]
    NonlinearSolve { iterations: usize, increment: f64 },
    #[error("level set is not regular: min |grad y| = {min_grad:e} below {threshold:e}")]
    GradientTooSmall { min_grad: f64, threshold: f64 },
    #[error("bands of level-set components {a} and {b} overlap: distance {distance:e} < 2*eps = {required:e}")]
    NeighborhoodOverlap {
        a: usize,
        b: usize,
        distance: f64,
        required: f64,
    },
    #[error("level set has {0} components where one was expected")]
    Components(usize),
    #[error("control is not stationary: KKT residual {residual:e} exceeds {tol:e}")]
    NotStationary { residual: f64, tol: f64 },
    #[error("optimizer did not converge after {iterations} iterations (KKT residual {residual:e})")]
    OptimizerStalled { iterations: usize, residual: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
