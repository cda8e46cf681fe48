use super::types::{Action, CellKind, EnvKind, GridState, Terminal, TrajectoryStep};
use super::GridError;
use crate::reward::RewardConfig;

/// Advances `state` by one action.
///
/// Blocked moves consume a step and leave positions untouched. A Sokoban box
/// pushed into a non-target corner ends the episode immediately as a failure.
/// The environment reward is non-zero only on the terminal step.
pub fn step(state: &GridState, action: Action, config: &RewardConfig) -> Result<(GridState, TrajectoryStep), GridError> {
    if state.terminal.is_terminal() {
        return Err(GridError::SteppedTerminal(state.terminal));
    }
    let mut next = state.clone();
    next.step_index += 1;

    let mut coord = state.player;
    if let Some(dir) = action.direction() {
        let layout = &*state.layout;
        match layout.kind {
            EnvKind::Sokoban => {
                if let Some(target) = layout.neighbor(state.player, dir).filter(|&c| layout.cell(c).is_open()) {
                    if state.has_box(target) {
                        let beyond = layout
                            .neighbor(target, dir)
                            .filter(|&c| layout.cell(c).is_open() && !state.has_box(c));
                        if let Some(beyond) = beyond {
                            let idx = next.boxes.binary_search(&target).expect("box present");
                            next.boxes[idx] = beyond;
                            next.boxes.sort();
                            next.player = target;
                            coord = beyond;
                        }
                    } else {
                        next.player = target;
                        coord = target;
                    }
                }
            }
            EnvKind::FrozenLake => {
                if let Some(target) = layout.neighbor(state.player, dir).filter(|&c| layout.cell(c).is_open()) {
                    next.player = target;
                    coord = target;
                }
            }
        }
    }

    next.terminal = classify(&next);
    let env_reward = match next.terminal {
        Terminal::Running => 0.0,
        Terminal::Success => config.success,
        Terminal::Failure | Terminal::Timeout => config.failure,
    };
    let record = TrajectoryStep {
        coord,
        action,
        env_reward,
        format_valid: action.is_well_formed(),
    };
    Ok((next, record))
}

fn classify(state: &GridState) -> Terminal {
    if state.success_holds() {
        return Terminal::Success;
    }
    let layout = &*state.layout;
    let failed = match layout.kind {
        EnvKind::Sokoban => state.boxes.iter().any(|&b| layout.is_dead_corner(b)),
        EnvKind::FrozenLake => layout.cell(state.player) == CellKind::Hole,
    };
    if failed {
        Terminal::Failure
    } else if state.step_index >= state.step_budget {
        Terminal::Timeout
    } else {
        Terminal::Running
    }
}

/// Replays `actions` from `initial`, stopping at the first terminal state.
/// Returns the trajectory together with the post-step frames.
pub fn replay(
    initial: &GridState,
    actions: impl IntoIterator<Item = Action>,
    config: &RewardConfig,
) -> (super::Trajectory, Vec<GridState>) {
    let mut state = initial.clone();
    let mut steps = Vec::new();
    let mut frames = Vec::new();
    for action in actions {
        if state.terminal.is_terminal() {
            break;
        }
        let (next, record) = step(&state, action, config).expect("running state");
        steps.push(record);
        frames.push(next.clone());
        state = next;
    }
    let outcome = match state.terminal {
        Terminal::Success => super::Outcome::Success,
        Terminal::Failure => super::Outcome::Failure,
        // An unfinished replay is reported as a timeout.
        Terminal::Timeout | Terminal::Running => super::Outcome::Timeout,
    };
    let trajectory = super::Trajectory {
        steps,
        initial_coord: initial.resting_coord(),
        outcome,
        layout_seed: initial.layout.seed,
    };
    (trajectory, frames)
}
