use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("fractional order {0} outside the admissible range")]
    Order(f64),
    #[error("function must vanish at t = 0 for a fractional derivative (|f(0)| = {value:e}, tolerance {tol:e})")]
    NonVanishingStart { value: f64, tol: f64 },
    #[error("empty function")]
    Empty,
    #[error("Hurst parameter {0} outside (0, 1)")]
    Hurst(f64),
    #[error("invalid parameter `{name}`: {reason}")]
    Param { name: &'static str, reason: String },
    #[error("covariance factorization failed after jitter ({0})")]
    Factorization(String),
    #[error("singular diffusion matrix")]
    SingularSigma,
    #[error("non-finite value at step {step}")]
    NonFinite { step: usize },
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("path carries no driving increments (exact-conditioning sampler)")]
    NoIncrements,
    #[error("{0}")]
    Estimator(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Param { name, reason: reason.into() }
}
