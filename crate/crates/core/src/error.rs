use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("scene generation failed: {0}")]
    Generation(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("room category mismatch: {0}")]
    RoomMismatch(String),

    #[error("unknown category `{0}`")]
    UnknownCategory(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("goal `{0}` unreachable from the current cell")]
    Unreachable(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable, machine-parsable category used by the command-line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Generation(_) => "generation",
            Error::Usage(_) => "usage",
            Error::Config(_) => "config",
            Error::RoomMismatch(_) => "category-mismatch",
            Error::UnknownCategory(_) => "lookup",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::Parse { .. } => "parse",
            Error::Unreachable(_) => "unreachable",
            Error::NonFinite(_) => "non-finite",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn parse(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
