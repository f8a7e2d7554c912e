//! Experiment driver for the `gbsde` crate: configuration, subcommands and
//! run reports.

pub mod commands;
pub mod config;
pub mod oracles;
pub mod report;

pub use commands::{run, Command, Options};
pub use config::{Experiment, ExperimentConfig, SCHEMA_VERSION};
pub use report::RunReport;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    /// A library error, tagged with the stage that raised it.
    #[error("{stage}: {source}")]
    Run {
        stage: &'static str,
        #[source]
        source: gbsde::Error,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for configuration problems, 3 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Run { source: gbsde::Error::Configuration(_), .. } => 2,
            _ => 3,
        }
    }
}

pub(crate) trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T> Stage<T> for gbsde::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Run { stage, source })
    }
}
