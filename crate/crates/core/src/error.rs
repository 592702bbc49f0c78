//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Two traces or grids that must share a sampling grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    /// A numerical procedure failed (singular system, non-finite values, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// A text input (CSV, config) could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
