use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("covariance not positive semidefinite: {0}")]
    NotPsd(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical divergence at step {step}: {what}")]
    Diverged { step: usize, what: String },

    #[error("solver did not converge: residual {residual:e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("rank-deficient system: {0}")]
    RankDeficient(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
