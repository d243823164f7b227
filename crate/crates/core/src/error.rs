use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("degenerate row {row}: zero norm")]
    DegenerateRow { row: usize },

    #[error("degenerate variance: tensor is constant")]
    DegenerateVariance,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid specification: {0}")]
    Spec(String),

    #[error("plan error: {0}")]
    Plan(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("training diverged at epoch {epoch} (loss {loss}): {context}")]
    Divergence {
        epoch: usize,
        loss: f32,
        context: String,
    },

    #[error("malformed NPY file: {0}")]
    Npy(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
