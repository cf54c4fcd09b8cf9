use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (dimension mismatch,
    /// overlapping masks, invalid config values, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("unsupported image format: {}", .0.display())]
    UnsupportedFormat(PathBuf),

    #[error("corrupt image data in {}: {reason}", path.display())]
    CorruptImage { path: PathBuf, reason: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config error: {0}")]
    Config(String),

    /// Every capture in a physical evaluation grid was discarded by cleaning.
    #[error("degenerate capture grid: all {0} grid points were discarded")]
    DegenerateGrid(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Shorthand for returning a contract violation.
pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Contract(msg.into()))
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(path.into())
        } else {
            Error::Io {
                path: path.into(),
                source,
            }
        }
    }
}
