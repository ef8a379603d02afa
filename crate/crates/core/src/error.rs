use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the toolkit. Evaluation failures of a blackbox are not
/// errors: they surface as [`EvalStatus::Failed`](crate::blackbox::EvalStatus).
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    Usage(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown problem `{name}`; valid names: {valid}")]
    UnknownProblem { name: String, valid: String },

    #[error("cross-entropy run performed no iteration (budget {budget} < {samples} samples)")]
    EmptyTrace { budget: usize, samples: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
