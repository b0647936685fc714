use thiserror::Error;

/// Errors produced by the numerical kernels and experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("contrast kappa = -1 is forbidden (operator is not Fredholm)")]
    ForbiddenContrast,

    #[error("contrast kappa = {0} lies outside the critical interval (-1, -1/3)")]
    NonCritical(f64),

    #[error("value {value} outside domain {domain}")]
    Domain { value: f64, domain: &'static str },

    #[error("mesh parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("degenerate triangle {index} (area {area:e})")]
    DegenerateTriangle { index: usize, area: f64 },

    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("mass matrix is not positive definite (pivot {pivot} = {value:e})")]
    MassNotSpd { pivot: usize, value: f64 },

    #[error("matrix is singular at shift {shift:e}; delta is numerically at a zero of the spectrum")]
    Singular { shift: f64 },

    #[error("eigensolver did not converge after {iterations} iterations (best residuals {best_residuals:?})")]
    NoConvergence {
        iterations: usize,
        best_residuals: Vec<f64>,
    },

    #[error("system dimension {dim} exceeds dense cap {cap}")]
    DenseCap { dim: usize, cap: usize },

    #[error("sweep failed at delta = {delta}: {source}")]
    Sweep {
        delta: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("plan error: {0}")]
    Plan(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
