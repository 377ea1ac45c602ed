use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("row {row}: {reason}")]
    InvalidProfile { row: usize, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("state or slot index {index} out of range for n = {n}")]
    OutOfRange { index: usize, n: usize },

    #[error("average row entropy is zero; entropic time is undefined")]
    DegenerateEntropy,

    #[error("out-degree {degree} of row {row} exceeds n = {n}")]
    DegreeTooLarge { row: usize, degree: usize, n: usize },

    #[error("tail index alpha = {0} must lie in (0, 1)")]
    AlphaOutOfRange(f64),

    #[error("argument {name} = {value} outside its domain ({domain})")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("quadrature did not reach tolerance {tol:e} (last error estimate {estimate:e})")]
    NoConvergence { tol: f64, estimate: f64 },

    #[error("power iteration did not converge within {max_iter} iterations (residual {residual:e})")]
    MaxIterExceeded { max_iter: usize, residual: f64 },

    #[error("limits from different starts disagree (tv = {tv:e}); chain has several closed classes")]
    MultipleClasses { tv: f64 },

    #[error("distance stayed above {eps} up to horizon {horizon}")]
    HorizonExceeded { horizon: usize, eps: f64 },

    #[error("instance too large for exhaustive nice-path machinery: n = {n} > {limit}")]
    Infeasible { n: usize, limit: usize },

    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
