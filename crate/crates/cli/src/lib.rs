//! Library side of the `polybc` command line tool.

pub mod config;
pub mod output;
pub mod run;

pub use config::TrainConfig;
pub use run::{run, Command, Summary};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("training failed: {0}")]
    Training(String),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Training(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}
