//! Error type shared by every module.
//!
//! Variants are grouped in two families that map onto process exit codes:
//! input problems (I/O, file format, parameter validation, shape mismatch)
//! exit with 1, numerical failures (rank deficiency, divergence, undefined
//! metric) exit with 2. `Display` renders as `<category>: <detail>` so a
//! front end can print `error: {err}` verbatim.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file contents (bad magic, version, truncation, parse).
    #[error("format: {0}")]
    Format(String),

    /// Invalid parameters or data (non-finite entries, out-of-range values).
    #[error("validation: {0}")]
    Validation(String),

    /// Shape mismatch between operands.
    #[error("dimension: {0}")]
    Dimension(String),

    /// Requested more components than the data supports.
    #[error("rank: {0}")]
    Rank(String),

    /// An iterative solver produced a non-finite state.
    #[error("divergence: {0}")]
    Divergence(String),

    /// A metric whose defining ratio is 0/0 on this input.
    #[error("undefined-metric: {0}")]
    UndefinedMetric(String),

    /// Random generation could not satisfy a constraint within its budget.
    #[error("generation: {0}")]
    Generation(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code the front end should use for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Rank(_) | Error::Divergence(_) | Error::UndefinedMetric(_) => 2,
            _ => 1,
        }
    }
}
