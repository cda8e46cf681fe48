//! Deterministic Sokoban and FrozenLake environments over a shared grid model.

mod dynamics;
mod generate;
mod projection;
mod text;
mod types;

use thiserror::Error;

pub use dynamics::{replay, step};
pub use generate::{generate_frozenlake, generate_sokoban, validate_reachability, GENERATION_RETRY_BUDGET};
pub use projection::{cell_center, project_continuous, DEFAULT_RESOLUTION_M};
pub use text::{layout_to_text, parse_state, state_to_text};
pub use types::{
    Action, CellKind, Direction, EnvKind, GridCoord, GridLayout, GridState, Outcome, Terminal, Trajectory,
    TrajectoryStep, DEFAULT_STEP_BUDGET,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("infeasible generation after a retry budget of {budget}: {reason}")]
    InfeasibleGeneration { budget: u32, reason: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("step called on a terminal state ({0:?})")]
    SteppedTerminal(Terminal),
    #[error("out of bounds: {0}")]
    OutOfBounds(String),
    #[error("layout parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}
