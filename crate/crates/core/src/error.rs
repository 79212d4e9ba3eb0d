//! Crate-wide error type for fallible, user-facing paths.
//!
//! Tensor shape misuse inside the numeric kernels is a programming error
//! and panics with a message naming the offending shapes; everything that
//! depends on external input (files, configs, checkpoints, datasets)
//! returns [`Error`].

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration or usage (CLI exit code 2).
    #[error("config error: {0}")]
    Config(String),

    /// A call violated a module contract, e.g. decoding mode `full` on a
    /// basic-variant model (CLI exit code 2).
    #[error("contract error: {0}")]
    Contract(String),

    /// Filesystem failure (CLI exit code 3).
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file contents: images, manifests, checkpoints (CLI exit
    /// code 3).
    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    /// Numeric failure during training, e.g. a NaN loss (CLI exit code 4).
    #[error("numeric error: {0}")]
    Numeric(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), message: message.into() }
    }
}
