use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid coefficients: {0}")]
    InvalidCoefficients(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid/kernel mismatch: {0}")]
    GridKernelMismatch(String),

    #[error("time step {dt} violates the stability bound dt * max(B + lambda) = {product:.4} > 0.5")]
    Stability { dt: f64, product: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("eigen solver did not converge: {0}")]
    NonConvergence(String),

    #[error("Perron positivity lost: {0}")]
    Positivity(String),

    #[error("crossover point not found: {0}")]
    CrossoverNotFound(String),

    #[error("drift supremum does not stabilise: {0}")]
    DriftUnbounded(String),

    #[error("dual eigenfunction required for this regime")]
    MissingPhi,

    #[error("empty minorisation interval: {0}")]
    EmptyInterval(String),

    #[error("certificate constraint violated: {0}")]
    Constraint(String),

    #[error("oracle input rejected: {0}")]
    Oracle(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}
