use thiserror::Error;

/// Errors raised by the estimation, tuning and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: expected {expected}, got {got}")]
    Dimension {
        what: String,
        expected: String,
        got: String,
    },

    #[error("non-finite value in {what} at ({row}, {col})")]
    NonFinite { what: String, row: usize, col: usize },

    #[error("non-finite value in block {block} at iteration {iteration}")]
    Diverged { iteration: usize, block: &'static str },

    #[error("SVD did not converge on a {rows}x{cols} matrix")]
    Svd { rows: usize, cols: usize },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("every grid combination failed during cross-validation")]
    AllCombinationsFailed,

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(what: impl Into<String>, expected: impl ToString, got: impl ToString) -> Self {
        Error::Dimension {
            what: what.into(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
