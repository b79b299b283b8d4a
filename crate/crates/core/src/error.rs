use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not satisfy an operation's contract.
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("{context}: invalid argument: {detail}")]
    InvalidArgument {
        context: &'static str,
        detail: String,
    },

    #[error("{context}: non-finite value: {detail}")]
    NonFinite {
        context: &'static str,
        detail: String,
    },

    /// Malformed binary container; `offset` is the byte position where decoding failed.
    #[error("format error at byte {offset}: {detail}")]
    Format { offset: usize, detail: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("gradient tape: {0}")]
    Tape(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("training: {0}")]
    Training(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(context: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidArgument {
            context,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
