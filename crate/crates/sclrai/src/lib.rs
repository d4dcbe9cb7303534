//! File formats, configuration and subcommands of the `sclrai` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;

pub use config::RunConfig;
pub use error::{CliError, Result};
