use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = MterError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MterError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("empty corpus after filtering")]
    EmptyCorpus,

    #[error("config error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("{what} index {index} out of range (size {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at iteration {iteration}: total loss {total}")]
    Divergence { iteration: usize, total: f64 },

    #[error("no evaluable users")]
    NoEvaluableUsers,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl MterError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MterError::Io {
            path: path.into(),
            source,
        }
    }
}
