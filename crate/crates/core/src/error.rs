use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    Shape { op: &'static str, left: String, right: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("optimizer protocol violation: {0}")]
    Protocol(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("ingestion error at {path}:{line}: {message}")]
    Ingestion { path: PathBuf, line: usize, message: String },

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("model is frozen; parameter `{0}` cannot be modified")]
    Frozen(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, left: impl ToString, right: impl ToString) -> Self {
        Error::Shape {
            op,
            left: left.to_string(),
            right: right.to_string(),
        }
    }

    /// Wraps an I/O failure with the path it concerns.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
