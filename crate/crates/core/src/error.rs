use std::path::PathBuf;

/// Errors raised by the decomposition library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument or configuration value violates its contract.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A malformed or unsupported audio file. `offset` is the byte position
    /// in the file where parsing failed.
    #[error("{path}: {message} (at byte offset {offset})")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A computation produced a non-finite result.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
