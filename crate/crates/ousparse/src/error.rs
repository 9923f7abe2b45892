//! Crate-wide error type.

use thiserror::Error;

/// Errors shared by all modules.
#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible shapes or an index out of range.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An argument violates a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A matrix is singular or an iteration failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A simulated state left the trusted range.
    #[error("simulation diverged: {0}")]
    Divergence(String),

    /// Too few observations for the requested operation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A scenario description is malformed or internally inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// A requested record or file is missing.
    #[error("lookup error: {0}")]
    Lookup(String),

    /// Stored results do not match the scenario that produced them.
    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
