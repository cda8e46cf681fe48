//! Command implementations behind the `atlas` binary.

pub mod artifacts;
pub mod commands;
pub mod config;
mod plot;

use thiserror::Error;

pub use commands::{cmd_eval, cmd_render_atlas, cmd_train, cmd_waterfall, EvalSummary, TrainSummary, WaterfallReport};
pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("seed leakage: {0}")]
    Leakage(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("missing episode: {0}")]
    MissingEpisode(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Leakage(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Checkpoint(_) | CliError::MissingEpisode(_) => 4,
        }
    }
}
