use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument {name}: {message}")]
    InvalidArgument { name: &'static str, message: String },

    #[error("matrix is not positive definite ({0}) even after jitter")]
    NotPositiveDefinite(&'static str),

    #[error("non-positive predictive degrees of freedom {0}; prior needs nu0 > d - 1")]
    NonPositiveDof(f64),

    #[error("training diverged at step {step}: loss {loss}")]
    Divergence { step: usize, loss: f64 },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
