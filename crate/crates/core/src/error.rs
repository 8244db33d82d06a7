use thiserror::Error;

/// Errors raised across the library. The CLI maps each variant onto an exit code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),
    /// Inputs are individually valid but inconsistent with each other (lengths, grids).
    #[error("contract violation: {0}")]
    Contract(String),
    /// A configuration is invalid or would make a scheme unstable.
    #[error("configuration error: {0}")]
    Config(String),
    /// A numerical routine failed (singular matrix, eigen-solver breakdown).
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// An identity check exceeded its tolerance.
    #[error("verification failed: {0}")]
    Verification(String),
}

pub type Result<T> = std::result::Result<T, Error>;
