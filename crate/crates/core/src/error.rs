use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed npy at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("unsupported npy layout: {0}")]
    UnsupportedLayout(String),

    #[error("unsupported npy dtype {0:?}, expected '<f4' or '<f8'")]
    Dtype(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate entry {text:?} at line {line}")]
    Duplicate { text: String, line: usize },

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("degenerate vector (norm {norm:e} below threshold)")]
    DegenerateVector { norm: f64 },

    #[error("degenerate concept {0:?}: embedding coincides with the concept mean")]
    DegenerateConcept(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
