use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum SblError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dense oracle refused: active dimension {dim} exceeds limit {limit}")]
    OracleGuard { dim: usize, limit: usize },

    #[error("ill-conditioned Hessian: {0}")]
    IllConditioned(String),

    #[error("optimizer failed to converge: {0}")]
    Convergence(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },

    #[error("model document: {0}")]
    Model(String),
}

impl SblError {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        SblError::Argument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SblError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, SblError>;
