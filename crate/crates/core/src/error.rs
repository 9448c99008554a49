//! Crate-wide error type.
//!
//! The variants mirror how callers are expected to react: `Structural` means
//! the caller violated a shape or indexing contract, `Numerical` means the
//! computation itself broke down (non-finite values, failed convergence),
//! `Resource` means a configured cap was exceeded, `Format` is a malformed
//! external file, and `Stale` is a posterior snapshot that no longer matches
//! the parameters it was computed for.

use thiserror::Error;

/// Errors produced by this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Shape, index, or contract violation in the inputs.
    #[error("structural error: {0}")]
    Structural(String),

    /// Numerical breakdown (non-finite value, convergence failure, ...).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A configured resource cap was exceeded.
    #[error("resource error: {0}")]
    Resource(String),

    /// Malformed external data (IDX, CSV, checkpoint, ...).
    #[error("format error: {0}")]
    Format(String),

    /// A posterior snapshot does not match the network's current parameters.
    #[error("stale posterior: {0}")]
    Stale(String),

    /// I/O failure while reading or writing artifact files.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
