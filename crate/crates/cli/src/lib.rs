//! Experiment runner: configuration, the training and evaluation modes, the
//! property-check suite and on-disk artifacts.

pub mod artifacts;
pub mod checks;
pub mod config;
pub mod report;
pub mod run;

use baymeta_core::Error as CoreError;

pub use config::{Mode, RunConfig};
pub use run::{run, RunSummary};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_DIVERGENCE: u8 = 2;
pub const EXIT_CHECKS: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("training diverged: {0}")]
    Divergence(CoreError),

    #[error("{failed} of {total} checks failed")]
    ChecksFailed { failed: usize, total: usize },

    #[error(transparent)]
    Core(CoreError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn config(key: &str, message: impl std::fmt::Display) -> Self {
        CliError::Config(format!("{key}: {message}"))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Divergence(_) => EXIT_DIVERGENCE,
            CliError::ChecksFailed { .. } => EXIT_CHECKS,
            _ => EXIT_CONFIG,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Divergence { .. } | CoreError::NonFinite(_) => CliError::Divergence(e),
            CoreError::InvalidArgument { .. } => CliError::Config(e.to_string()),
            e => CliError::Core(e),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Output(e.to_string())
    }
}
