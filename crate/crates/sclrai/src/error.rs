use std::path::PathBuf;

use crate::formats::FormatError;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const CHECK_FAILED: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const NUMERIC: u8 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Format { path: PathBuf, source: FormatError },

    #[error("{path}: {source}")]
    Input {
        path: PathBuf,
        source: sclrai_core::Error,
    },

    #[error(transparent)]
    Core(#[from] sclrai_core::Error),

    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::CheckFailed(_) => exit::CHECK_FAILED,
            CliError::Core(sclrai_core::Error::NonFinite(_)) => exit::NUMERIC,
            _ => exit::USAGE,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
