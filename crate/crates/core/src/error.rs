use std::path::PathBuf;

use crate::vocab::LanguageFamily;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("duplicate token id {0}")]
    DuplicateId(u32),

    #[error("token ids must be contiguous from 0; id {0} is missing")]
    MissingId(u32),

    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("dimension mismatch: {what} is {got}, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("embedding column {0} has zero norm")]
    ZeroNorm(usize),

    #[error("family {0} may never be masked")]
    UnmaskableFamily(LanguageFamily),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no usable training examples ({truncated} truncated)")]
    NoTrainingData { truncated: usize },

    #[error("model error: {0}")]
    Model(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.to_string(),
        }
    }

    pub(crate) fn config(msg: impl ToString) -> Self {
        Error::Config(msg.to_string())
    }

    /// True for errors caused by bad input data rather than a bad invocation.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Config(_))
    }
}
