use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid nonlinearity: {0}")]
    InvalidModel(String),

    #[error("hypothesis ({name}) violated: {detail}")]
    Hypothesis { name: &'static str, detail: String },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("non-finite value in {0}")]
    NumericalOverflow(&'static str),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:e})")]
    LinearSolve { iterations: usize, residual: f64 },

    #[error("eigen-solver did not converge after {iterations} iterations (residual {residual:e})")]
    EigenSolve { iterations: usize, residual: f64 },

    #[error("invalid symmetry: {0}")]
    InvalidSymmetry(String),

    #[error("group element is not an exact grid permutation: {0}; use the interpolating action")]
    NotGridExact(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("all {0} starts failed to converge")]
    AllStartsFailed(usize),

    #[error("field format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
