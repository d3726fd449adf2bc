//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its documented constraints.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A recording could not be processed; carries the recording id.
    #[error("recording `{id}`: {msg}")]
    Recording { id: String, msg: String },

    /// Vector/matrix dimensions do not line up. Signals a pipeline bug
    /// rather than bad user data.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An operation received input that violates its contract.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A text file failed to parse; `line` is 1-based.
    #[error("{path}:{line}: {msg}")]
    Malformed {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Malformed {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
