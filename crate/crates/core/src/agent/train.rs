use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::policy::{Policy, Transition};
use super::AgentError;
use crate::atlas::{accumulate_batch, AtlasRegistry, AtlasState, BatchStats, BlendedAtlas, Schedule, DEFAULT_ALPHA};
use crate::gridworld::{
    generate_frozenlake, generate_sokoban, step, EnvKind, GridError, GridState, Outcome, Terminal, Trajectory,
    DEFAULT_STEP_BUDGET,
};
use crate::heatmap::Heatmap;
use crate::heuristics::DangerParams;
use crate::memory::{
    assemble_prompt, mine_keyframes, ExemplarPool, ExemplarTag, InsertOutcome, PoolManifest, PromptDocument,
    SkillBook, SkillCategory, StructuralEncoder, DEFAULT_TOP_K_SKILLS,
};
use crate::reward::{shaped_reward, RewardBreakdown, RewardConfig};

const TRAIN_STREAM: u64 = 0;
const EVAL_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub width: usize,
    pub height: usize,
    pub n_boxes: usize,
    pub hole_fraction: f64,
    pub step_budget: u32,
}

impl EnvConfig {
    pub fn sokoban(width: usize, height: usize, n_boxes: usize) -> Self {
        Self {
            kind: EnvKind::Sokoban,
            width,
            height,
            n_boxes,
            hole_fraction: 0.0,
            step_budget: DEFAULT_STEP_BUDGET,
        }
    }

    pub fn frozenlake(width: usize, height: usize, hole_fraction: f64) -> Self {
        Self {
            kind: EnvKind::FrozenLake,
            width,
            height,
            n_boxes: 0,
            hole_fraction,
            step_budget: DEFAULT_STEP_BUDGET,
        }
    }

    pub fn generate(&self, seed: u64) -> Result<GridState, GridError> {
        let state = match self.kind {
            EnvKind::Sokoban => generate_sokoban(seed, self.width, self.height, self.n_boxes)?,
            EnvKind::FrozenLake => generate_frozenlake(seed, self.width, self.height, self.hole_fraction)?,
        };
        Ok(state.with_step_budget(self.step_budget))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub env: EnvConfig,
    pub reward: RewardConfig,
    pub epochs: u64,
    pub batch_size: usize,
    pub alpha: f64,
    pub schedule: Schedule,
    pub danger_params: DangerParams,
    /// Layout seeds trained on round-robin, one atlas each.
    pub train_seeds: Vec<u64>,
    pub master_seed: u64,
    pub agent: super::AgentParams,
    pub top_k_skills: usize,
    /// Assemble the augmented prompt at every rollout step.
    pub assemble_prompts: bool,
    pub checkpoint_every: Option<u64>,
    pub checkpoint_root: Option<PathBuf>,
}

impl TrainConfig {
    pub fn new(env: EnvConfig, train_seeds: Vec<u64>, master_seed: u64) -> Self {
        Self {
            reward: RewardConfig::for_env(env.kind),
            env,
            epochs: 200,
            batch_size: 128,
            alpha: DEFAULT_ALPHA,
            schedule: Schedule::Linear,
            danger_params: DangerParams::default(),
            train_seeds,
            master_seed,
            agent: super::AgentParams::default(),
            top_k_skills: DEFAULT_TOP_K_SKILLS,
            assemble_prompts: true,
            checkpoint_every: None,
            checkpoint_root: None,
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let invalid = |m: String| Err(AgentError::ConfigInvalid(m));
        if self.epochs == 0 {
            return invalid("epochs must be at least 1".into());
        }
        if self.train_seeds.is_empty() {
            return invalid("at least one training seed is required".into());
        }
        let unique: BTreeSet<u64> = self.train_seeds.iter().copied().collect();
        if unique.len() != self.train_seeds.len() {
            return invalid("training seeds must be distinct".into());
        }
        if !(self.alpha >= 0.0 && self.alpha < 1.0) {
            return invalid(format!("alpha must lie in [0, 1), got {}", self.alpha));
        }
        if self.env.step_budget == 0 {
            return invalid("step_budget must be at least 1".into());
        }
        if self.checkpoint_every == Some(0) {
            return invalid("checkpoint_every must be at least 1".into());
        }
        self.reward.validate().map_err(AgentError::ConfigInvalid)?;
        self.agent.validate().map_err(AgentError::ConfigInvalid)?;
        Ok(())
    }
}

/// Everything recorded about one training episode.
#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub id: u64,
    pub epoch: u64,
    pub layout_seed: u64,
    pub initial: GridState,
    pub trajectory: Trajectory,
    pub frames: Vec<GridState>,
    pub rewards: Vec<RewardBreakdown>,
    /// Content hash of the blended maps each step was shaped against.
    pub step_blend_hashes: Vec<Arc<str>>,
    pub phi_start: f64,
    pub phi_end: f64,
}

impl EpisodeRecord {
    pub fn total_return(&self) -> f64 {
        self.rewards.iter().map(|r| r.total).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: u64,
    pub success_rate: f64,
    pub mean_return: f64,
    pub mean_env: f64,
    pub mean_danger: f64,
    pub mean_affinity: f64,
    pub pool_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolEvent {
    pub epoch: u64,
    pub episode: u64,
    pub tag: ExemplarTag,
    pub outcome: InsertOutcome,
    pub positives: usize,
    pub negatives: usize,
}

/// Hooks for artifact emission. Every method defaults to doing nothing.
pub trait TrainObserver {
    /// Called for every layout's atlas at epoch 0 and after every update.
    fn on_atlas(&mut self, _atlas: &AtlasState) -> Result<(), AgentError> {
        Ok(())
    }
    fn on_episode(&mut self, _episode: &EpisodeRecord) -> Result<(), AgentError> {
        Ok(())
    }
    fn on_prompt(&mut self, _episode: u64, _step: usize, _prompt: &PromptDocument) {}
    fn on_pool_event(&mut self, _event: &PoolEvent) -> Result<(), AgentError> {
        Ok(())
    }
    fn on_epoch_end(&mut self, _metrics: &EpochMetrics) -> Result<(), AgentError> {
        Ok(())
    }
}

pub struct NoopObserver;

impl TrainObserver for NoopObserver {}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalEpisode {
    pub layout_seed: u64,
    pub outcome: Outcome,
    pub steps: usize,
    pub total_return: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub success_rate: f64,
    /// Set when no episodes were run; the rate is then reported as 0.
    pub empty: bool,
    pub episodes: Vec<EvalEpisode>,
}

fn episode_rng(master: u64, stream: u64, epoch: u64, index: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    for (chunk, v) in seed.chunks_exact_mut(8).zip([master, stream, epoch, index]) {
        chunk.copy_from_slice(&v.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

pub fn checkpoint_dir(root: &Path, master_seed: u64, epoch: u64) -> PathBuf {
    root.join(format!("run_{master_seed}")).join(format!("epoch_{epoch}"))
}

/// The closed loop: rollouts, policy learning, atlas evolution and memory refresh.
pub struct TrainingRun<P> {
    pub config: TrainConfig,
    pub policy: P,
    layouts: Vec<GridState>,
    registry: AtlasRegistry,
    pool: ExemplarPool,
    skills: SkillBook,
    encoder: StructuralEncoder,
    metrics: Vec<EpochMetrics>,
    epoch: u64,
}

struct Rollout<'a> {
    config: &'a TrainConfig,
    pool: &'a ExemplarPool,
    skills: &'a SkillBook,
    encoder: &'a StructuralEncoder,
}

impl Rollout<'_> {
    #[allow(clippy::too_many_arguments)]
    fn run<P: Policy>(
        &self,
        policy: &P,
        initial: &GridState,
        atlas: &Arc<BlendedAtlas>,
        atlas_hash: &Arc<str>,
        mut rng: ChaCha8Rng,
        greedy: bool,
        id: u64,
        epoch: u64,
        observer: &mut dyn TrainObserver,
    ) -> Result<EpisodeRecord, AgentError> {
        let mut state = initial.clone();
        let mut steps = Vec::new();
        let mut frames = Vec::new();
        let mut rewards = Vec::new();
        let mut hashes = Vec::new();
        let mut p_prev = initial.resting_coord();
        while !state.terminal.is_terminal() {
            let prompt = self.config.assemble_prompts.then(|| {
                assemble_prompt(atlas.clone(), self.pool, self.skills, &state, self.config.top_k_skills, self.encoder)
            });
            if let Some(doc) = &prompt {
                observer.on_prompt(id, steps.len(), doc);
            }
            let action = if greedy {
                policy.act_greedy(&state, prompt.as_ref(), &mut rng)
            } else {
                policy.act(&state, prompt.as_ref(), &mut rng)
            };
            let (next, record) = step(&state, action, &self.config.reward)?;
            let breakdown = shaped_reward(&record, p_prev, (&atlas.danger, &atlas.affinity), &self.config.reward)?;
            p_prev = record.coord;
            steps.push(record);
            rewards.push(breakdown);
            hashes.push(atlas_hash.clone());
            frames.push(next.clone());
            state = next;
        }
        let outcome = match state.terminal {
            Terminal::Success => Outcome::Success,
            Terminal::Failure => Outcome::Failure,
            Terminal::Timeout | Terminal::Running => Outcome::Timeout,
        };
        let trajectory = Trajectory {
            steps,
            initial_coord: initial.resting_coord(),
            outcome,
            layout_seed: initial.layout.seed,
        };
        let phi = |m: &Heatmap, c| m.get(c).unwrap_or(0.0);
        Ok(EpisodeRecord {
            id,
            epoch,
            layout_seed: initial.layout.seed,
            phi_start: phi(&atlas.affinity, trajectory.initial_coord),
            phi_end: phi(&atlas.affinity, trajectory.terminal_coord()),
            initial: initial.clone(),
            trajectory,
            frames,
            rewards,
            step_blend_hashes: hashes,
        })
    }
}

impl<P: Policy> TrainingRun<P> {
    pub fn new(config: TrainConfig, policy: P) -> Result<Self, AgentError> {
        config.validate()?;
        let layouts = config
            .train_seeds
            .iter()
            .map(|&s| config.env.generate(s))
            .collect::<Result<Vec<_>, _>>()?;
        let mut registry = AtlasRegistry::new();
        for l in &layouts {
            registry.insert(AtlasState::with_params(&l.layout, config.alpha, config.epochs, config.schedule, &config.danger_params)?);
        }
        Ok(Self {
            skills: SkillBook::for_env(config.env.kind),
            config,
            policy,
            layouts,
            registry,
            pool: ExemplarPool::new(),
            encoder: StructuralEncoder,
            metrics: Vec::new(),
            epoch: 0,
        })
    }

    /// Rebuilds a run from a checkpoint written by [`TrainingRun::write_checkpoint`].
    pub fn restore(config: TrainConfig, policy: P, checkpoint: &LoadedCheckpoint) -> Result<Self, AgentError> {
        let mut run = Self::new(config, policy)?;
        run.registry = checkpoint.registry.clone();
        run.pool = checkpoint.pool.clone();
        run.skills.restore_state(&checkpoint.skills_state)?;
        run.epoch = checkpoint.epoch;
        Ok(run)
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn layouts(&self) -> &[GridState] {
        &self.layouts
    }

    pub fn registry(&self) -> &AtlasRegistry {
        &self.registry
    }

    pub fn pool(&self) -> &ExemplarPool {
        &self.pool
    }

    pub fn skills(&self) -> &SkillBook {
        &self.skills
    }

    pub fn metrics(&self) -> &[EpochMetrics] {
        &self.metrics
    }

    /// Layout seeds this run's memory has seen: configured training seeds plus restored atlases.
    pub fn training_seeds(&self) -> BTreeSet<u64> {
        self.config.train_seeds.iter().copied().chain(self.registry.seeds()).collect()
    }

    fn rollout(&self) -> Rollout<'_> {
        Rollout {
            config: &self.config,
            pool: &self.pool,
            skills: &self.skills,
            encoder: &self.encoder,
        }
    }

    /// Collects `n_episodes` episodes under the current policy against a frozen atlas snapshot.
    /// Layouts are visited round-robin.
    pub fn rollout_batch(&self, n_episodes: usize, observer: &mut dyn TrainObserver) -> Result<Vec<EpisodeRecord>, AgentError> {
        let snapshot = self.registry.snapshot();
        let hashes: BTreeMap<u64, Arc<str>> = snapshot.iter().map(|(&k, a)| (k, Arc::from(a.content_hash()))).collect();
        let rollout = self.rollout();
        (0..n_episodes)
            .map(|i| {
                let initial = &self.layouts[i % self.layouts.len()];
                let seed = initial.layout.seed;
                let id = self.epoch * self.config.batch_size as u64 + i as u64;
                let rng = episode_rng(self.config.master_seed, TRAIN_STREAM, self.epoch, i as u64);
                rollout.run(&self.policy, initial, &snapshot[&seed], &hashes[&seed], rng, false, id, self.epoch, observer)
            })
            .collect()
    }

    /// One rollout/learn/evolve cycle.
    pub fn train_epoch(&mut self, observer: &mut dyn TrainObserver) -> Result<EpochMetrics, AgentError> {
        if self.epoch == 0 {
            for atlas in self.registry.iter() {
                observer.on_atlas(atlas)?;
            }
        }
        self.policy.begin_epoch(self.epoch, self.config.epochs);
        let episodes = self.rollout_batch(self.config.batch_size, observer)?;

        let transitions: Vec<Transition> = episodes
            .iter()
            .flat_map(|ep| {
                let n = ep.trajectory.steps.len();
                let done = ep.trajectory.outcome != Outcome::Timeout;
                (0..n).map(move |i| Transition {
                    state: if i == 0 { ep.initial.clone() } else { ep.frames[i - 1].clone() },
                    action: ep.trajectory.steps[i].action,
                    reward: ep.rewards[i].total,
                    next_state: ep.frames[i].clone(),
                    done: done && i + 1 == n,
                })
            })
            .collect();
        self.policy.learn(&transitions);

        let mut updated = AtlasRegistry::new();
        for atlas in self.registry.iter() {
            let seed = atlas.layout_seed;
            let layout = &self.layouts.iter().find(|l| l.layout.seed == seed).expect("layout for atlas").layout;
            let batch: Vec<Trajectory> = episodes
                .iter()
                .filter(|e| e.layout_seed == seed)
                .map(|e| e.trajectory.clone())
                .collect();
            let stats: BatchStats = accumulate_batch(layout, &batch)?;
            let next = atlas.ema_update(&stats)?;
            observer.on_atlas(&next)?;
            updated.insert(next);
        }
        self.registry = updated;

        for ep in &episodes {
            for ex in mine_keyframes(&ep.trajectory, &ep.initial, &ep.frames, ep.id, &self.encoder)? {
                let tag = ex.tag;
                let outcome = self.pool.insert_with_eviction(ex);
                if matches!(outcome, InsertOutcome::Inserted { .. }) {
                    self.skills.record_hit(match tag {
                        ExemplarTag::Positive => SkillCategory::PushStrategies,
                        ExemplarTag::Negative => SkillCategory::MistakesToAvoid,
                    });
                }
                observer.on_pool_event(&PoolEvent {
                    epoch: self.epoch + 1,
                    episode: ep.id,
                    tag,
                    outcome,
                    positives: self.pool.class(ExemplarTag::Positive).len(),
                    negatives: self.pool.class(ExemplarTag::Negative).len(),
                })?;
            }
        }
        self.skills.record_update();

        for ep in &episodes {
            observer.on_episode(ep)?;
        }

        self.epoch += 1;
        let n = episodes.len().max(1) as f64;
        let mean = |f: &dyn Fn(&EpisodeRecord) -> f64| episodes.iter().map(f).sum::<f64>() / n;
        let metrics = EpochMetrics {
            epoch: self.epoch,
            success_rate: mean(&|e| if e.trajectory.outcome.is_success() { 1.0 } else { 0.0 }),
            mean_return: mean(&|e| e.total_return()),
            mean_env: mean(&|e| e.rewards.iter().map(|r| r.env).sum()),
            mean_danger: mean(&|e| e.rewards.iter().map(|r| r.danger).sum()),
            mean_affinity: mean(&|e| e.rewards.iter().map(|r| r.affinity).sum()),
            pool_size: self.pool.len(),
        };
        self.metrics.push(metrics);
        observer.on_epoch_end(&metrics)?;
        if let (Some(every), Some(root)) = (self.config.checkpoint_every, self.config.checkpoint_root.clone()) {
            if self.epoch.is_multiple_of(every) || self.epoch == self.config.epochs {
                self.write_checkpoint(&root)?;
            }
        }
        Ok(metrics)
    }

    /// Runs `epochs` cycles and returns the full metrics history.
    pub fn train(&mut self, epochs: u64, observer: &mut dyn TrainObserver) -> Result<&[EpochMetrics], AgentError> {
        if epochs == 0 {
            return Err(AgentError::ConfigInvalid("epochs must be at least 1".into()));
        }
        for _ in 0..epochs {
            self.train_epoch(observer)?;
        }
        Ok(&self.metrics)
    }

    /// Runs `n_episodes` on layouts generated from `eval_seeds`, shaped against
    /// heuristic-only maps. Reads memory but never writes it.
    pub fn evaluate(&self, n_episodes: usize, greedy: bool, eval_seeds: &[u64]) -> Result<EvalResult, AgentError> {
        let trained = self.training_seeds();
        if let Some(&s) = eval_seeds.iter().find(|s| trained.contains(s)) {
            return Err(AgentError::SeedOverlap(s));
        }
        if n_episodes == 0 {
            return Ok(EvalResult {
                success_rate: 0.0,
                empty: true,
                episodes: Vec::new(),
            });
        }
        if eval_seeds.is_empty() {
            return Err(AgentError::ConfigInvalid("evaluation needs at least one seed".into()));
        }
        let mut prepared = Vec::new();
        for &seed in eval_seeds {
            let initial = self.config.env.generate(seed)?;
            let atlas = AtlasState::with_params(
                &initial.layout,
                self.config.alpha,
                self.config.epochs,
                self.config.schedule,
                &self.config.danger_params,
            )?
            .heuristic_only();
            let hash: Arc<str> = Arc::from(atlas.content_hash());
            prepared.push((initial, Arc::new(atlas), hash));
        }
        let rollout = self.rollout();
        let mut episodes = Vec::with_capacity(n_episodes);
        for i in 0..n_episodes {
            let (initial, atlas, hash) = &prepared[i % prepared.len()];
            let rng = episode_rng(self.config.master_seed, EVAL_STREAM, 0, i as u64);
            let rec = rollout.run(&self.policy, initial, atlas, hash, rng, greedy, i as u64, 0, &mut NoopObserver)?;
            episodes.push(EvalEpisode {
                layout_seed: rec.layout_seed,
                outcome: rec.trajectory.outcome,
                steps: rec.trajectory.len(),
                total_return: rec.total_return(),
            });
        }
        let wins = episodes.iter().filter(|e| e.outcome.is_success()).count();
        Ok(EvalResult {
            success_rate: wins as f64 / n_episodes as f64,
            empty: false,
            episodes,
        })
    }

    /// SHA-256 over atlas checkpoints, the pool manifest and the skill ranking.
    pub fn memory_digest(&self) -> String {
        let mut h = Sha256::new();
        for atlas in self.registry.iter() {
            h.update(atlas.to_checkpoint_text().as_bytes());
        }
        h.update(serde_json::to_vec(&self.pool.to_manifest()).expect("manifest serializes"));
        h.update(self.skills.state_text().as_bytes());
        hex::encode(h.finalize())
    }

    /// Writes `run_<seed>/epoch_<k>/` under `root` and returns its path.
    pub fn write_checkpoint(&self, root: &Path) -> Result<PathBuf, AgentError> {
        let dir = checkpoint_dir(root, self.config.master_seed, self.epoch);
        fs::create_dir_all(&dir)?;
        for atlas in self.registry.iter() {
            fs::write(dir.join(format!("atlas_{}.txt", atlas.layout_seed)), atlas.to_checkpoint_text())?;
        }
        if let Some(q) = self.policy.snapshot() {
            fs::write(dir.join("qtable.txt"), q)?;
        }
        let manifest = serde_json::to_string_pretty(&self.pool.to_manifest()).expect("manifest serializes");
        fs::write(dir.join("pool.json"), manifest + "\n")?;
        fs::write(dir.join("skills.txt"), self.skills.state_text())?;
        fs::write(dir.join("epoch.txt"), format!("{}\n", self.epoch))?;
        Ok(dir)
    }
}

#[derive(Debug, Clone)]
pub struct LoadedCheckpoint {
    pub epoch: u64,
    pub registry: AtlasRegistry,
    pub pool: ExemplarPool,
    pub skills_state: String,
    pub qtable: Option<String>,
}

impl LoadedCheckpoint {
    pub fn layout_seeds(&self) -> BTreeSet<u64> {
        self.registry.seeds().collect()
    }
}

pub fn load_checkpoint(dir: &Path) -> Result<LoadedCheckpoint, AgentError> {
    let corrupt = |what: &str, e: &dyn std::fmt::Display| AgentError::Checkpoint(format!("{}: {what}: {e}", dir.display()));
    if !dir.is_dir() {
        return Err(AgentError::Checkpoint(format!("{} is not a directory", dir.display())));
    }
    let read = |name: &str| fs::read_to_string(dir.join(name)).map_err(|e| corrupt(name, &e));
    let epoch = read("epoch.txt")?.trim().parse::<u64>().map_err(|e| corrupt("epoch.txt", &e))?;
    let mut registry = AtlasRegistry::new();
    let mut names: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("atlas_") && n.ends_with(".txt"))
        })
        .collect();
    names.sort();
    for p in names {
        let text = fs::read_to_string(&p)?;
        let atlas = AtlasState::from_checkpoint_text(&text).map_err(|e| corrupt(&p.display().to_string(), &e))?;
        registry.insert(atlas);
    }
    if registry.is_empty() {
        return Err(AgentError::Checkpoint(format!("{} holds no atlas files", dir.display())));
    }
    let manifest: PoolManifest = serde_json::from_str(&read("pool.json")?).map_err(|e| corrupt("pool.json", &e))?;
    let pool = ExemplarPool::from_manifest(&manifest, &StructuralEncoder)?;
    let qtable = fs::read_to_string(dir.join("qtable.txt")).ok();
    Ok(LoadedCheckpoint {
        epoch,
        registry,
        pool,
        skills_state: read("skills.txt")?,
        qtable,
    })
}
