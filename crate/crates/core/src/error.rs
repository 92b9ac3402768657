use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("iterative solver stalled after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("linear solve violated its residual bound: {what} = {value:e} > {bound:e}")]
    ResidualCheck {
        what: &'static str,
        value: f64,
        bound: f64,
    },

    #[error("degenerate scalar constraint (c^T A^-1 c = {0:e})")]
    DegenerateConstraint(f64),

    #[error("semismooth Newton did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonFailed { iterations: usize, residual: f64 },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
