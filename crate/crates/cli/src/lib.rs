//! Driver for staircase scans: configuration, minimizer cache, export.

pub mod cache;
pub mod config;
pub mod export;
pub mod scan;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Compute(#[from] staircase_core::Error),
    #[error(transparent)]
    Cache(#[from] cache::CacheError),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    /// 2 for configuration problems, 1 for everything raised while computing.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Compute(_) => "compute",
            CliError::Cache(_) => "cache",
            CliError::Io(_) => "io",
        }
    }
}
