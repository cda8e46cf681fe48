//! Policy interface, the tabular reference learner, and the closed training loop.

mod policy;
mod train;

use thiserror::Error;

pub use policy::{state_key, AgentParams, MalformedInjector, Policy, TabularAgent, Transition};
pub use train::{
    checkpoint_dir, load_checkpoint, EnvConfig, EpisodeRecord, EpochMetrics, EvalEpisode, EvalResult, LoadedCheckpoint,
    NoopObserver, PoolEvent, TrainConfig, TrainObserver, TrainingRun,
};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("evaluation seed {0} is also a training seed")]
    SeedOverlap(u64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Grid(#[from] crate::gridworld::GridError),
    #[error(transparent)]
    Atlas(#[from] crate::atlas::AtlasError),
    #[error(transparent)]
    Reward(#[from] crate::reward::RewardError),
    #[error(transparent)]
    Memory(#[from] crate::memory::MemoryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
