//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid failure data: {0}")]
    InvalidData(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("knapsack instances above {max} items are not supported (got {got})")]
    TooManyItems { max: usize, got: usize },

    #[error("covariance matrix is not positive definite even with jitter {jitter:.1e}")]
    IllConditioned { jitter: f64 },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
