use std::path::PathBuf;

/// Errors produced by the simulation library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A numeric argument outside the operation's domain (for example a non-finite value).
    #[error("domain error: {0}")]
    Domain(String),
    /// The caller broke an API precondition such as matching dimensions.
    #[error("usage error: {0}")]
    Usage(String),
    /// A configuration value is invalid or makes the request infeasible.
    #[error("configuration error: {0}")]
    Config(String),
    /// A text input could not be parsed.
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },
    /// A study test set could not be filled from the candidate pool.
    #[error(
        "insufficient candidates: need {needed} per category, have same={same}, best_better={best_better}, best_worse={best_worse}"
    )]
    InsufficientCandidates {
        needed: usize,
        same: usize,
        best_better: usize,
        best_worse: usize,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
