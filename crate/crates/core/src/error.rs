//! Crate-level error type. The categories map one-to-one onto the CLI's
//! exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed configuration (bad flag, unknown key, unparsable formula).
    #[error("config: {0}")]
    Config(String),

    /// A documented operation precondition was violated.
    #[error("precondition: {0}")]
    Precondition(String),

    /// An adaptive truncation budget was exhausted before convergence.
    #[error("truncation budget: {0}")]
    Truncation(String),

    /// Filesystem failure while writing results.
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn precondition(msg: impl Into<String>) -> Error {
        Error::Precondition(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Error {
        Error::Config(msg.into())
    }

    pub fn truncation(msg: impl Into<String>) -> Error {
        Error::Truncation(msg.into())
    }

    /// Stable process exit code for the category.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Precondition(_) => 2,
            Error::Truncation(_) => 3,
            Error::Io(_) => 4,
        }
    }
}
