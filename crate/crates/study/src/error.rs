use std::path::PathBuf;

/// Errors raised by the study server.
#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error("{0} not found")]
    NotFound(String),
    /// The request is well formed but conflicts with the current state, for
    /// example a second answer to the same item.
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("study `{0}` is closed: its cohort is full")]
    Closed(String),
    /// The request breaks the protocol or carries invalid values.
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: corrupt log record: {message}")]
    CorruptLog {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Core(#[from] sim2real::Error),
}

impl StudyError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        StudyError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, StudyError>;
