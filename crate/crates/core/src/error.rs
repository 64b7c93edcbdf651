use std::io;

use thiserror::Error;

/// Errors produced anywhere in the denoising library.
#[derive(Debug, Error)]
pub enum Error {
    /// The input data itself is unusable (non-finite entries, ragged rows, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A parameter is out of range for the data it is applied to.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An iterative routine failed to converge or produced a degenerate result.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// Logistic fit diverged because the classes are (quasi-)separable.
    #[error("complete separation detected: standardized slope {coefficient:.3} exceeds {limit}")]
    Separation { coefficient: f64, limit: f64 },

    /// A theorem or lemma was requested outside of its stated hypotheses.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid_argument(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
