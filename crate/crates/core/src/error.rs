use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("regime value {z} is not reachable for this model (expected one of {expected:?})")]
    InvalidState { z: f64, expected: [f64; 2] },

    #[error("covariance is indefinite (smallest eigenvalue {min_eigenvalue:e})")]
    IndefiniteCovariance { min_eigenvalue: f64 },

    #[error("rate {rate} exceeds thinning bound {bound} at x = {x}")]
    RateBoundViolated { rate: f64, bound: f64, x: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("simulation budget of {budget} datasets exhausted after {accepted} acceptances")]
    BudgetExhausted { budget: u64, accepted: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
