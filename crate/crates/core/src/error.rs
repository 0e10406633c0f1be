use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-contract input data (shapes, sizes, values).
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// Incompatible kernel or option settings.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("optimization diverged: {0}")]
    Divergence(String),

    /// Gradient of a non-differentiable kernel requested at its kink.
    #[error("kernel gradient is undefined at coincident points")]
    Singularity,

    #[error("learnware `{0}` already exists in the pool")]
    Conflict(String),

    #[error("learnware `{0}` not found")]
    NotFound(String),

    #[error("pool integrity check failed for `{entry}`: {reason}")]
    Integrity { entry: String, reason: String },

    /// Raw training rows would leak into the pool.
    #[error("inaccessibility check failed: {0}")]
    Inaccessible(String),

    #[error("pool is locked by another writer ({0})")]
    Locked(PathBuf),

    #[error("external model failed: {0}")]
    External(String),

    #[error("csv error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by the caller's data rather than the computation.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Input(_)
                | Error::Dimension { .. }
                | Error::Config(_)
                | Error::Csv { .. }
                | Error::Json(_)
                | Error::Io { .. }
                | Error::NotFound(_)
                | Error::Conflict(_)
                | Error::Integrity { .. }
                | Error::Inaccessible(_)
        )
    }
}
