use std::io;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    /// A structured input (raster file, config, token list) could not be decoded.
    /// `offset` is a byte offset for binary input and a 1-based line number for text.
    #[error("format error at {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("solver diverged at iteration {iteration}")]
    SolverDiverged { iteration: usize },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
