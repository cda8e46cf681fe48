//! TOML run configuration.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use atlas_core::agent::{AgentParams, EnvConfig, TrainConfig};
use atlas_core::atlas::{Schedule, DEFAULT_ALPHA};
use atlas_core::gridworld::{EnvKind, DEFAULT_STEP_BUDGET};
use atlas_core::memory::DEFAULT_TOP_K_SKILLS;
use atlas_core::reward::RewardConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Environment {
    Sokoban,
    Frozenlake,
}

impl Environment {
    fn kind(self) -> EnvKind {
        match self {
            Environment::Sokoban => EnvKind::Sokoban,
            Environment::Frozenlake => EnvKind::FrozenLake,
        }
    }
}

/// Any subset of reward fields. With a preset it overrides; without one it must be complete.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardOverride {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub success: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format_penalty: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_danger: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_affinity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub use_gamma_correction: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    pub learning_rate: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_fraction: f64,
}

impl Default for AgentSection {
    fn default() -> Self {
        let p = AgentParams::default();
        Self {
            learning_rate: p.learning_rate,
            gamma: p.gamma,
            epsilon_start: p.epsilon_start,
            epsilon_end: p.epsilon_end,
            epsilon_decay_fraction: p.epsilon_decay_fraction,
        }
    }
}

fn default_budget() -> u32 {
    DEFAULT_STEP_BUDGET
}
fn default_epochs() -> u64 {
    200
}
fn default_batch() -> usize {
    128
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_true() -> bool {
    true
}
fn default_every() -> u64 {
    50
}
fn default_top_k() -> usize {
    DEFAULT_TOP_K_SKILLS
}
fn default_eval_episodes() -> usize {
    32
}
fn default_out() -> PathBuf {
    PathBuf::from("runs/default")
}
fn default_train_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4]
}
fn default_boxes() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub environment: Environment,
    pub width: usize,
    pub height: usize,
    #[serde(default = "default_boxes")]
    pub n_boxes: usize,
    #[serde(default)]
    pub hole_fraction: f64,
    #[serde(default = "default_budget")]
    pub step_budget: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_preset: Option<String>,
    #[serde(default = "default_epochs")]
    pub epochs: u64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_train_seeds")]
    pub train_seeds: Vec<u64>,
    #[serde(default)]
    pub eval_seeds: Vec<u64>,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default = "default_true")]
    pub eval_greedy: bool,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default = "default_true")]
    pub emit_heatmaps: bool,
    #[serde(default = "default_every")]
    pub heatmap_every: u64,
    #[serde(default = "default_true")]
    pub emit_waterfall: bool,
    #[serde(default = "default_true")]
    pub emit_pool_log: bool,
    #[serde(default = "default_every")]
    pub checkpoint_every: u64,
    #[serde(default = "default_true")]
    pub assemble_prompts: bool,
    #[serde(default = "default_top_k")]
    pub top_k_skills: usize,
    #[serde(default)]
    pub malformed_rate: f64,
    #[serde(default)]
    pub agent: AgentSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<RewardOverride>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// The one canonical text form.
    pub fn to_canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolved_reward(&self) -> Result<RewardConfig, CliError> {
        let over = self.reward.clone().unwrap_or_default();
        let base = match &self.reward_preset {
            Some(name) => RewardConfig::preset(name).ok_or_else(|| {
                CliError::Config(format!(
                    "field `reward_preset`: unknown preset {name:?} (expected sokoban, frozenlake, navigation or primitive_skill)"
                ))
            })?,
            None if self.reward.is_none() => RewardConfig::for_env(self.environment.kind()),
            None => {
                let missing: Vec<&str> = [
                    ("success", over.success.is_none()),
                    ("failure", over.failure.is_none()),
                    ("format_penalty", over.format_penalty.is_none()),
                    ("lambda_danger", over.lambda_danger.is_none()),
                    ("lambda_affinity", over.lambda_affinity.is_none()),
                ]
                .into_iter()
                .filter_map(|(n, m)| m.then_some(n))
                .collect();
                if !missing.is_empty() {
                    return Err(CliError::Config(format!(
                        "without `reward_preset` the [reward] block must set {}",
                        missing.join(", ")
                    )));
                }
                RewardConfig::sokoban()
            }
        };
        let r = RewardConfig {
            success: over.success.unwrap_or(base.success),
            failure: over.failure.unwrap_or(base.failure),
            format_penalty: over.format_penalty.unwrap_or(base.format_penalty),
            lambda_danger: over.lambda_danger.unwrap_or(base.lambda_danger),
            lambda_affinity: over.lambda_affinity.unwrap_or(base.lambda_affinity),
            gamma: over.gamma.unwrap_or(base.gamma),
            use_gamma_correction: over.use_gamma_correction.unwrap_or(base.use_gamma_correction),
        };
        r.validate().map_err(|m| CliError::Config(format!("[reward]: {m}")))?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let field = |name: &str, msg: String| Err(CliError::Config(format!("field `{name}`: {msg}")));
        let train: BTreeSet<u64> = self.train_seeds.iter().copied().collect();
        if let Some(s) = self.eval_seeds.iter().find(|s| train.contains(s)) {
            return Err(CliError::Leakage(format!("seed {s} appears in both train_seeds and eval_seeds")));
        }
        if self.train_seeds.is_empty() {
            return field("train_seeds", "must not be empty".into());
        }
        if train.len() != self.train_seeds.len() {
            return field("train_seeds", "seeds must be distinct".into());
        }
        if self.epochs == 0 {
            return field("epochs", "must be at least 1".into());
        }
        if self.batch_size == 0 {
            return field("batch_size", "must be at least 1".into());
        }
        if self.heatmap_every == 0 {
            return field("heatmap_every", "must be at least 1".into());
        }
        if self.checkpoint_every == 0 {
            return field("checkpoint_every", "must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return field("alpha", format!("must lie in [0, 1), got {}", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.malformed_rate) {
            return field("malformed_rate", format!("must lie in [0, 1], got {}", self.malformed_rate));
        }
        if self.environment == Environment::Frozenlake && !(0.0..1.0).contains(&self.hole_fraction) {
            return field("hole_fraction", format!("must lie in [0, 1), got {}", self.hole_fraction));
        }
        self.resolved_reward()?;
        self.agent_params()
            .validate()
            .map_err(|m| CliError::Config(format!("[agent]: {m}")))?;
        Ok(())
    }

    pub fn agent_params(&self) -> AgentParams {
        let a = &self.agent;
        AgentParams {
            learning_rate: a.learning_rate,
            gamma: a.gamma,
            epsilon_start: a.epsilon_start,
            epsilon_end: a.epsilon_end,
            epsilon_decay_fraction: a.epsilon_decay_fraction,
        }
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            kind: self.environment.kind(),
            width: self.width,
            height: self.height,
            n_boxes: if self.environment == Environment::Sokoban { self.n_boxes } else { 0 },
            hole_fraction: self.hole_fraction,
            step_budget: self.step_budget,
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let mut c = TrainConfig::new(self.env_config(), self.train_seeds.clone(), self.master_seed);
        c.reward = self.resolved_reward()?;
        c.epochs = self.epochs;
        c.batch_size = self.batch_size;
        c.alpha = self.alpha;
        c.schedule = self.schedule;
        c.agent = self.agent_params();
        c.top_k_skills = self.top_k_skills;
        c.assemble_prompts = self.assemble_prompts;
        c.checkpoint_every = Some(self.checkpoint_every);
        c.checkpoint_root = Some(self.output_dir.join("checkpoints"));
        Ok(c)
    }
}
