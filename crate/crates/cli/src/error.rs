//! Harness-level errors mapped onto process exit codes.

use thiserror::Error;

use crate::config::ConfigError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(#[from] mesolj::Error),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl CliError {
    /// Exit codes: 2 config invalid, 3 hypothesis-regime violation,
    /// 4 numerical abort or i/o failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(ConfigError::Regime(_)) => 3,
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 4,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
