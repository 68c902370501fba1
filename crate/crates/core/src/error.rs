use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A group or image plan that violates its divisibility constraints.
    #[error("plan error: {0}")]
    Plan(String),

    #[error("capacity error: sequence length {len} exceeds position table length {max_len}")]
    Capacity { len: usize, max_len: usize },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("oracle invalid: {0}")]
    OracleInvalid(String),

    #[error("training aborted at step {step}: loss is {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("unavailable: {0}")]
    Unavailable(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
