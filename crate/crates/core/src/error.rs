//! Error type shared by the fitting, inference, and model-selection code.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlamError {
    /// Input violated a precondition (wrong dimension, invalid range, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A computation produced or encountered non-finite values, or a
    /// factorization failed beyond recovery.
    #[error("numeric failure: {0}")]
    NumericFailure(String),
}

impl FlamError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        FlamError::InvalidArgument(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        FlamError::NumericFailure(msg.into())
    }
}
