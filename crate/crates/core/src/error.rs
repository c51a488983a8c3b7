use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown key `{0}`")]
    UnknownKey(String),

    #[error("invalid configuration: {0}")]
    Invalid(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Every cell of the pose-cell volume went nonpositive during an update.
    #[error("pose-cell network collapsed: no positive activity after inhibition")]
    Collapse,

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("point set is empty")]
    EmptySet,

    #[error("degenerate input: {0}")]
    Degenerate(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl Error {
    /// Process exit status: 1 runtime failure, 2 bad input, 3 missing data.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. }
            | Error::UnknownKey(_)
            | Error::Invalid(_)
            | Error::Dimension(_)
            | Error::Image { .. }
            | Error::Dataset(_)
            | Error::EmptySet
            | Error::Degenerate(_) => 2,
            Error::MissingData(_) => 3,
            Error::Collapse | Error::NonFinite(_) | Error::Io { .. } => 1,
        }
    }
}
