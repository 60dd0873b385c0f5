use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violates an operation's shape or value preconditions.
    #[error("rejected input: {0}")]
    RejectedInput(String),

    /// A run or model configuration cannot be used as given.
    #[error("configuration error: {0}")]
    Config(String),

    /// API misuse, e.g. backward without a matching forward cache.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error("corrupt dataset: {0}")]
    CorruptDataset(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image decode error on {path}: {message}")]
    Image { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn rejected(msg: impl Into<String>) -> Self {
        Error::RejectedInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
