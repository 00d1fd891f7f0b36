use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Weights that cannot be normalized onto the simplex.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Translation larger than the padding allows.
    #[error("shift {k} exceeds k_max = {k_max}")]
    ShiftOutOfRange { k: i64, k_max: usize },

    /// Instance too large for the exact LP oracle.
    #[error("instance too large: {n}x{m} cells exceeds {limit}")]
    Size { n: usize, m: usize, limit: usize },

    #[error("shape error: {0}")]
    Shape(String),

    /// Misuse of the differentiation tape.
    #[error("contract error: {0}")]
    Contract(String),

    #[error("config error: {0}")]
    Config(String),

    /// Malformed checkpoint or data file.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// A loss component evaluated to a non-finite value.
    #[error("non-finite loss in component `{component}` at step {step}")]
    NonFiniteLoss { component: String, step: u64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
