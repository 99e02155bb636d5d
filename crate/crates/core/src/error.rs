//! Error type shared by all modules of the lab.

use thiserror::Error;

/// Errors surfaced by numerical routines and experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside the documented domain of an operation.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An adaptive quadrature failed to reach the requested tolerance.
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    /// Cholesky factorization failed even after the maximal diagonal jitter.
    #[error(
        "factorization failed at pivot {pivot_index} (value {pivot_value:.3e}) \
         after jitter {jitter:.3e}; diagonal spread {diag_ratio:.3e}"
    )]
    Factorization {
        pivot_index: usize,
        pivot_value: f64,
        jitter: f64,
        /// Ratio of largest to smallest diagonal entry, a cheap conditioning proxy.
        diag_ratio: f64,
    },

    /// Array shapes or grid sizes do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Too few data points for the requested statistic.
    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A binary or text artifact does not match the documented layout.
    #[error("malformed artifact: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
