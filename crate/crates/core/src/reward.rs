//! Atlas-grounded dense reward shaping.
//!
//! The shaped reward for a step is
//! `env + format + lambda_danger * r_danger + lambda_affinity * r_affinity`,
//! with `r_danger = -danger(p_next)` and
//! `r_affinity = phi(p_next) - phi(p)` over the blended affinity map
//! (`gamma * phi(p_next) - phi(p)` when gamma correction is on).
//! The affinity term is a potential difference; the danger term is not, and
//! deliberately changes which policies are optimal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::{EnvKind, GridCoord, TrajectoryStep};
use crate::heatmap::Heatmap;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("coordinate {coord} outside {width}x{height} map")]
    OutOfBounds { coord: GridCoord, width: usize, height: usize },
    #[error("danger map is {danger:?} but affinity map is {affinity:?}")]
    DimensionMismatch { danger: (usize, usize), affinity: (usize, usize) },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub success: f64,
    pub failure: f64,
    pub format_penalty: f64,
    pub lambda_danger: f64,
    pub lambda_affinity: f64,
    pub gamma: f64,
    pub use_gamma_correction: bool,
}

impl RewardConfig {
    const fn table(success: f64, failure: f64, lambda: f64) -> Self {
        Self {
            success,
            failure,
            format_penalty: -0.5,
            lambda_danger: lambda,
            lambda_affinity: lambda,
            gamma: 0.99,
            use_gamma_correction: false,
        }
    }

    pub const fn sokoban() -> Self {
        Self::table(1.0, -0.1, 0.05)
    }

    pub const fn frozenlake() -> Self {
        Self::table(1.0, -0.1, 0.05)
    }

    pub const fn navigation() -> Self {
        Self::table(1.0, -0.1, 0.1)
    }

    pub const fn primitive_skill() -> Self {
        Self::table(1.0, 0.0, 0.3)
    }

    pub fn for_env(kind: EnvKind) -> Self {
        match kind {
            EnvKind::Sokoban => Self::sokoban(),
            EnvKind::FrozenLake => Self::frozenlake(),
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "sokoban" => Some(Self::sokoban()),
            "frozenlake" => Some(Self::frozenlake()),
            "navigation" => Some(Self::navigation()),
            "primitive_skill" => Some(Self::primitive_skill()),
            _ => None,
        }
    }

    /// Same terminal values, shaping switched off.
    pub fn sparse(self) -> Self {
        Self {
            lambda_danger: 0.0,
            lambda_affinity: 0.0,
            ..self
        }
    }

    pub fn shaping_bound(&self) -> f64 {
        self.lambda_danger + self.lambda_affinity
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.lambda_danger >= 0.0) || !(self.lambda_affinity >= 0.0) {
            return Err("shaping coefficients must be non-negative".into());
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if ![self.success, self.failure, self.format_penalty].iter().all(|v| v.is_finite()) {
            return Err("reward values must be finite".into());
        }
        Ok(())
    }
}

/// Per-step decomposition. `danger` and `affinity` are the scaled contributions;
/// the `_raw` fields hold the unscaled map terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub env: f64,
    pub danger: f64,
    pub affinity: f64,
    pub format: f64,
    pub total: f64,
    pub danger_raw: f64,
    pub affinity_raw: f64,
}

impl RewardBreakdown {
    pub fn visual(&self) -> f64 {
        self.danger + self.affinity
    }
}

fn lookup(map: &Heatmap, c: GridCoord) -> Result<f64, RewardError> {
    map.get(c).ok_or(RewardError::OutOfBounds {
        coord: c,
        width: map.width(),
        height: map.height(),
    })
}

/// `-danger(p_next)`, in `[-1, 0]`.
pub fn danger_penalty(p_next: GridCoord, danger_final: &Heatmap) -> Result<f64, RewardError> {
    Ok(-lookup(danger_final, p_next)?)
}

pub fn affinity_gain(
    p: GridCoord,
    p_next: GridCoord,
    affinity_final: &Heatmap,
    gamma: f64,
    use_gamma_correction: bool,
) -> Result<f64, RewardError> {
    let phi = lookup(affinity_final, p)?;
    let phi_next = lookup(affinity_final, p_next)?;
    Ok(if use_gamma_correction {
        gamma * phi_next - phi
    } else {
        phi_next - phi
    })
}

/// Shaped reward for one step. `maps` is `(danger_final, affinity_final)`.
pub fn shaped_reward(
    step: &TrajectoryStep,
    p_prev: GridCoord,
    maps: (&Heatmap, &Heatmap),
    config: &RewardConfig,
) -> Result<RewardBreakdown, RewardError> {
    let (danger_map, affinity_map) = maps;
    if danger_map.dims() != affinity_map.dims() {
        return Err(RewardError::DimensionMismatch {
            danger: danger_map.dims(),
            affinity: affinity_map.dims(),
        });
    }
    let danger_raw = danger_penalty(step.coord, danger_map)?;
    let affinity_raw = affinity_gain(p_prev, step.coord, affinity_map, config.gamma, config.use_gamma_correction)?;
    let format = if step.format_valid { 0.0 } else { config.format_penalty };
    let danger = config.lambda_danger * danger_raw;
    let affinity = config.lambda_affinity * affinity_raw;
    Ok(RewardBreakdown {
        env: step.env_reward,
        danger,
        affinity,
        format,
        total: step.env_reward + format + danger + affinity,
        danger_raw,
        affinity_raw,
    })
}
