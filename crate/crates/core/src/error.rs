use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the laboratory.
///
/// Variants are grouped so the command-line front end can map them onto
/// process exit codes (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("bad magic: expected \"CNDT\", found {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported version {0} (expected 1)")]
    BadVersion(u8),

    #[error("unknown dtype code {0}")]
    BadDtype(u8),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 config, 3 numeric, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 2,
            Error::Shape(_) | Error::NonFinite(_) | Error::Numeric(_) => 3,
            Error::BadMagic(_)
            | Error::BadVersion(_)
            | Error::BadDtype(_)
            | Error::Truncated { .. }
            | Error::Malformed { .. }
            | Error::Io { .. }
            | Error::Csv(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
