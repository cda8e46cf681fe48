//! Teacher-free evolution of the danger and affinity maps.
//!
//! Each epoch the rollout batch is reduced to two batch maps (terminal
//! failure positions, success-path visit frequencies), folded into running
//! statistics with an exponential moving average, and blended with the
//! static layout heuristics under an annealing coefficient `beta`.
//!
//! Inputs are restricted to [`Trajectory`] and [`GridLayout`] values; there is
//! no path for free-form text or external model output into the maps.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gridworld::{GridLayout, Trajectory};
use crate::heatmap::Heatmap;
use crate::heuristics::{affinity_heuristic, danger_heuristic_with, DangerParams};

pub const DEFAULT_ALPHA: f64 = 0.85;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AtlasError {
    #[error("trajectories from layout {found} mixed into batch for layout {expected}")]
    MixedLayouts { expected: u64, found: u64 },
    #[error("dimension mismatch: atlas is {expected:?}, batch is {found:?}")]
    DimensionMismatch { expected: (usize, usize), found: (usize, usize) },
    #[error("trajectory coordinate {0} lies outside the layout")]
    OutOfBounds(crate::gridworld::GridCoord),
    #[error("invalid atlas parameter: {0}")]
    InvalidParameter(String),
    #[error("atlas checkpoint line {line}: {msg}")]
    Checkpoint { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    #[default]
    Linear,
    Cosine,
}

impl Schedule {
    /// Annealing coefficient for epoch `k` of a `total`-epoch horizon; 0 at `k = 0`, 1 from `k = total` on.
    pub fn beta(self, k: u64, total: u64) -> f64 {
        let total = total.max(1);
        let frac = (k as f64 / total as f64).min(1.0);
        match self {
            Schedule::Linear => frac,
            Schedule::Cosine => {
                if k >= total {
                    1.0
                } else {
                    0.5 * (1.0 - (PI * frac).cos())
                }
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Schedule::Linear => "linear",
            Schedule::Cosine => "cosine",
        }
    }
}

impl FromStr for Schedule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(Schedule::Linear),
            "cosine" => Ok(Schedule::Cosine),
            other => Err(format!("unknown schedule {other:?} (expected linear or cosine)")),
        }
    }
}

/// `min(k / K, 1)`.
pub fn beta_schedule(epoch: u64, total_epochs: u64) -> f64 {
    Schedule::Linear.beta(epoch, total_epochs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub danger_batch: Heatmap,
    pub affinity_batch: Heatmap,
    pub n_fail: usize,
    pub n_succ: usize,
}

/// Reduces one rollout batch on a single layout to its batch maps.
///
/// Danger: fraction of failed trajectories ending in each cell. Timeouts are
/// failures. Affinity: each successful trajectory spreads a unit of mass over
/// the cells it visits, `1 / (len * n_succ)` per visit.
pub fn accumulate_batch(layout: &GridLayout, trajectories: &[Trajectory]) -> Result<BatchStats, AtlasError> {
    let (w, h) = (layout.width, layout.height);
    let mut danger = Heatmap::zeros(w, h);
    let mut affinity = Heatmap::zeros(w, h);
    for t in trajectories {
        if t.layout_seed != layout.seed {
            return Err(AtlasError::MixedLayouts {
                expected: layout.seed,
                found: t.layout_seed,
            });
        }
        if let Some(bad) = std::iter::once(t.initial_coord)
            .chain(t.steps.iter().map(|s| s.coord))
            .find(|c| !layout.in_bounds(*c))
        {
            return Err(AtlasError::OutOfBounds(bad));
        }
    }

    let (succ, fail): (Vec<&Trajectory>, Vec<&Trajectory>) =
        trajectories.iter().partition(|t| t.outcome.is_success());

    if !fail.is_empty() {
        let share = 1.0 / fail.len() as f64;
        for t in &fail {
            danger.add(t.terminal_coord(), share);
        }
    }
    // A success with no steps has nothing to spread and is left out of the normalizer.
    let succ_with_steps: Vec<&&Trajectory> = succ.iter().filter(|t| !t.is_empty()).collect();
    if !succ_with_steps.is_empty() {
        let n = succ_with_steps.len() as f64;
        for t in &succ_with_steps {
            let share = 1.0 / (t.len() as f64 * n);
            for s in &t.steps {
                affinity.add(s.coord, share);
            }
        }
    }
    Ok(BatchStats {
        danger_batch: danger,
        affinity_batch: affinity,
        n_fail: fail.len(),
        n_succ: succ.len(),
    })
}

/// Final maps handed to reward shaping and prompt assembly for one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendedAtlas {
    pub danger: Heatmap,
    pub affinity: Heatmap,
    pub beta: f64,
    pub epoch: u64,
    pub layout_seed: u64,
}

impl BlendedAtlas {
    /// Content digest of both maps, used to check snapshot consistency.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.danger.digest());
        h.update(self.affinity.digest());
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtlasState {
    pub danger_heuristic: Heatmap,
    pub affinity_heuristic: Heatmap,
    pub danger_stat: Heatmap,
    pub affinity_stat: Heatmap,
    pub epoch: u64,
    pub alpha: f64,
    pub total_epochs: u64,
    pub schedule: Schedule,
    pub layout_seed: u64,
}

impl AtlasState {
    pub fn new(layout: &GridLayout, alpha: f64, total_epochs: u64) -> Result<Self, AtlasError> {
        Self::with_params(layout, alpha, total_epochs, Schedule::Linear, &DangerParams::default())
    }

    pub fn with_params(
        layout: &GridLayout,
        alpha: f64,
        total_epochs: u64,
        schedule: Schedule,
        danger: &DangerParams,
    ) -> Result<Self, AtlasError> {
        validate_params(alpha, total_epochs)?;
        let (w, h) = (layout.width, layout.height);
        Ok(Self {
            danger_heuristic: danger_heuristic_with(layout, danger),
            affinity_heuristic: affinity_heuristic(layout),
            danger_stat: Heatmap::zeros(w, h),
            affinity_stat: Heatmap::zeros(w, h),
            epoch: 0,
            alpha,
            total_epochs,
            schedule,
            layout_seed: layout.seed,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.danger_heuristic.dims()
    }

    /// `M_stat <- alpha * M_stat + (1 - alpha) * M_batch` for both fields; advances the epoch.
    pub fn ema_update(&self, batch: &BatchStats) -> Result<AtlasState, AtlasError> {
        for m in [&batch.danger_batch, &batch.affinity_batch] {
            if m.dims() != self.dims() {
                return Err(AtlasError::DimensionMismatch {
                    expected: self.dims(),
                    found: m.dims(),
                });
            }
        }
        let a = self.alpha;
        let ema = |stat: &Heatmap, fresh: &Heatmap| stat.zip_with(fresh, |s, b| a * s + (1.0 - a) * b).clamped();
        Ok(AtlasState {
            danger_stat: ema(&self.danger_stat, &batch.danger_batch),
            affinity_stat: ema(&self.affinity_stat, &batch.affinity_batch),
            epoch: self.epoch + 1,
            ..self.clone()
        })
    }

    pub fn beta(&self) -> f64 {
        self.schedule.beta(self.epoch, self.total_epochs)
    }

    pub fn blend(&self) -> BlendedAtlas {
        self.blend_with_beta(self.beta())
    }

    /// Heuristic branch only, as used on layouts never seen in training.
    pub fn heuristic_only(&self) -> BlendedAtlas {
        self.blend_with_beta(0.0)
    }

    pub fn blend_with_beta(&self, beta: f64) -> BlendedAtlas {
        let mix = |heur: &Heatmap, stat: &Heatmap| {
            if beta <= 0.0 {
                heur.clone()
            } else if beta >= 1.0 {
                stat.clone()
            } else {
                heur.zip_with(stat, |h, s| ((1.0 - beta) * h + beta * s).clamp(h.min(s), h.max(s)))
            }
        };
        BlendedAtlas {
            danger: mix(&self.danger_heuristic, &self.danger_stat),
            affinity: mix(&self.affinity_heuristic, &self.affinity_stat),
            beta,
            epoch: self.epoch,
            layout_seed: self.layout_seed,
        }
    }

    pub fn to_checkpoint_text(&self) -> String {
        let (w, h) = self.dims();
        let mut out = String::new();
        writeln!(out, "atlas-checkpoint 1").unwrap();
        writeln!(out, "layout_seed {}", self.layout_seed).unwrap();
        writeln!(out, "alpha {}", self.alpha).unwrap();
        writeln!(out, "epoch {}", self.epoch).unwrap();
        writeln!(out, "total_epochs {}", self.total_epochs).unwrap();
        writeln!(out, "schedule {}", self.schedule.as_str()).unwrap();
        writeln!(out, "size {w} {h}").unwrap();
        for (name, map) in self.named_maps() {
            writeln!(out, "{name}").unwrap();
            for row in map.values().chunks(w) {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(out, "{}", line.join(" ")).unwrap();
            }
        }
        out
    }

    fn named_maps(&self) -> [(&'static str, &Heatmap); 4] {
        [
            ("danger_heuristic", &self.danger_heuristic),
            ("affinity_heuristic", &self.affinity_heuristic),
            ("danger_stat", &self.danger_stat),
            ("affinity_stat", &self.affinity_stat),
        ]
    }

    pub fn from_checkpoint_text(text: &str) -> Result<AtlasState, AtlasError> {
        let mut lines = text.split_terminator('\n').enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| AtlasError::Checkpoint {
                line: 0,
                msg: format!("unexpected end of file, expected {what}"),
            })
        };
        let bad = |line: usize, msg: String| AtlasError::Checkpoint { line, msg };

        let (ln, magic) = next("header")?;
        if magic != "atlas-checkpoint 1" {
            return Err(bad(ln, format!("unsupported header {magic:?}")));
        }
        let mut field = |key: &str| -> Result<(usize, String), AtlasError> {
            let (ln, l) = next(key)?;
            match l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')) {
                Some(v) => Ok((ln, v.to_string())),
                None => Err(bad(ln, format!("expected `{key} <value>`"))),
            }
        };
        fn num<T: FromStr>(ln: usize, v: &str) -> Result<T, AtlasError> {
            v.parse().map_err(|_| AtlasError::Checkpoint {
                line: ln,
                msg: format!("cannot parse {v:?}"),
            })
        }
        let (ln, v) = field("layout_seed")?;
        let layout_seed: u64 = num(ln, &v)?;
        let (ln, v) = field("alpha")?;
        let alpha: f64 = num(ln, &v)?;
        let (ln, v) = field("epoch")?;
        let epoch: u64 = num(ln, &v)?;
        let (ln, v) = field("total_epochs")?;
        let total_epochs: u64 = num(ln, &v)?;
        let (ln, v) = field("schedule")?;
        let schedule: Schedule = v.parse().map_err(|e| bad(ln, e))?;
        let (ln, v) = field("size")?;
        let mut dims = v.split(' ');
        let w: usize = num(ln, dims.next().unwrap_or(""))?;
        let h: usize = num(ln, dims.next().unwrap_or(""))?;
        validate_params(alpha, total_epochs).map_err(|e| bad(ln, e.to_string()))?;

        let mut maps = Vec::with_capacity(4);
        for name in ["danger_heuristic", "affinity_heuristic", "danger_stat", "affinity_stat"] {
            let (ln, l) = next(name)?;
            if l != name {
                return Err(bad(ln, format!("expected section {name}, found {l:?}")));
            }
            let mut values = Vec::with_capacity(w * h);
            for _ in 0..h {
                let (ln, row) = next("map row")?;
                let parsed: Vec<f64> = row.split(' ').map(|t| num(ln, t)).collect::<Result<_, _>>()?;
                if parsed.len() != w {
                    return Err(bad(ln, format!("expected {w} values, found {}", parsed.len())));
                }
                if parsed.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(bad(ln, "map values must lie in [0, 1]".into()));
                }
                values.extend(parsed);
            }
            maps.push(Heatmap::from_values(w, h, values).expect("length checked"));
        }
        if let Some((ln, _)) = lines.next() {
            return Err(bad(ln, "trailing content".into()));
        }
        let mut maps = maps.into_iter();
        Ok(AtlasState {
            danger_heuristic: maps.next().unwrap(),
            affinity_heuristic: maps.next().unwrap(),
            danger_stat: maps.next().unwrap(),
            affinity_stat: maps.next().unwrap(),
            epoch,
            alpha,
            total_epochs,
            schedule,
            layout_seed,
        })
    }
}

fn validate_params(alpha: f64, total_epochs: u64) -> Result<(), AtlasError> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(AtlasError::InvalidParameter(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    if total_epochs == 0 {
        return Err(AtlasError::InvalidParameter("total_epochs must be at least 1".into()));
    }
    Ok(())
}

/// `M_final = (1 - beta_k) M_heuristic + beta_k M_stat` for (danger, affinity).
pub fn blend_final(atlas: &AtlasState) -> (Heatmap, Heatmap) {
    let b = atlas.blend();
    (b.danger, b.affinity)
}

/// One atlas per layout seed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AtlasRegistry {
    atlases: BTreeMap<u64, AtlasState>,
}

impl AtlasRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, atlas: AtlasState) {
        self.atlases.insert(atlas.layout_seed, atlas);
    }

    pub fn get(&self, seed: u64) -> Option<&AtlasState> {
        self.atlases.get(&seed)
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        self.atlases.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &AtlasState> {
        self.atlases.values()
    }

    pub fn len(&self) -> usize {
        self.atlases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atlases.is_empty()
    }

    /// Frozen blended maps for every layout, taken between updates.
    pub fn snapshot(&self) -> BTreeMap<u64, std::sync::Arc<BlendedAtlas>> {
        self.atlases
            .iter()
            .map(|(&k, a)| (k, std::sync::Arc::new(a.blend())))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{generate_sokoban, Action, Direction, GridCoord, Outcome, TrajectoryStep};
    use proptest::prelude::*;

    fn traj(seed: u64, coords: &[(usize, usize)], outcome: Outcome) -> Trajectory {
        Trajectory {
            steps: coords
                .iter()
                .map(|&(x, y)| TrajectoryStep {
                    coord: GridCoord::new(x, y),
                    action: Action::Move(Direction::Up),
                    env_reward: 0.0,
                    format_valid: true,
                })
                .collect(),
            initial_coord: GridCoord::new(0, 0),
            outcome,
            layout_seed: seed,
        }
    }

    fn layout() -> GridLayout {
        (*generate_sokoban(3, 6, 6, 1).unwrap().layout).clone()
    }

    #[test]
    fn danger_batch_from_two_failures() {
        let l = layout();
        let b = accumulate_batch(&l, &[traj(3, &[(1, 1)], Outcome::Failure), traj(3, &[(2, 1), (2, 2)], Outcome::Timeout)]).unwrap();
        assert_eq!(b.danger_batch.at(GridCoord::new(1, 1)), 0.5);
        assert_eq!(b.danger_batch.at(GridCoord::new(2, 2)), 0.5);
        assert_eq!(b.danger_batch.sum(), 1.0);
        assert_eq!(b.n_fail, 2);
        assert_eq!(b.affinity_batch.sum(), 0.0);
    }

    #[test]
    fn empty_batch_is_zero() {
        let b = accumulate_batch(&layout(), &[]).unwrap();
        assert_eq!((b.n_fail, b.n_succ), (0, 0));
        assert_eq!(b.danger_batch.sum() + b.affinity_batch.sum(), 0.0);
    }

    #[test]
    fn affinity_batch_spreads_one_unit_per_success() {
        let b = accumulate_batch(&layout(), &[traj(3, &[(0, 0), (0, 1), (0, 2)], Outcome::Success)]).unwrap();
        for y in 0..3 {
            assert!((b.affinity_batch.at(GridCoord::new(0, y)) - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(b.n_succ, 1);
    }

    #[test]
    fn mixed_layouts_rejected() {
        let err = accumulate_batch(&layout(), &[traj(3, &[(1, 1)], Outcome::Failure), traj(4, &[(1, 1)], Outcome::Failure)]).unwrap_err();
        assert_eq!(err, AtlasError::MixedLayouts { expected: 3, found: 4 });
    }

    #[test]
    fn ema_single_update() {
        let l = layout();
        let atlas = AtlasState::new(&l, 0.85, 100).unwrap();
        let mut batch = accumulate_batch(&l, &[]).unwrap();
        batch.danger_batch.set(GridCoord::new(2, 3), 1.0);
        let next = atlas.ema_update(&batch).unwrap();
        assert!((next.danger_stat.at(GridCoord::new(2, 3)) - 0.15).abs() < 1e-15);
        assert_eq!(next.epoch, 1);

        let zero = accumulate_batch(&l, &[]).unwrap();
        let decayed = next.ema_update(&zero).unwrap();
        assert!((decayed.danger_stat.at(GridCoord::new(2, 3)) - 0.85 * next.danger_stat.at(GridCoord::new(2, 3))).abs() < 1e-15);
    }

    #[test]
    fn ema_dimension_mismatch() {
        let l = layout();
        let atlas = AtlasState::new(&l, 0.85, 100).unwrap();
        let batch = BatchStats {
            danger_batch: Heatmap::zeros(3, 3),
            affinity_batch: Heatmap::zeros(3, 3),
            n_fail: 0,
            n_succ: 0,
        };
        assert!(matches!(atlas.ema_update(&batch), Err(AtlasError::DimensionMismatch { .. })));
    }

    #[test]
    fn beta_schedule_endpoints() {
        assert_eq!(beta_schedule(0, 100), 0.0);
        assert_eq!(beta_schedule(100, 100), 1.0);
        assert_eq!(beta_schedule(50, 100), 0.5);
        assert_eq!(beta_schedule(500, 100), 1.0);
        assert_eq!(Schedule::Cosine.beta(0, 10), 0.0);
        assert_eq!(Schedule::Cosine.beta(10, 10), 1.0);
        assert!((Schedule::Cosine.beta(5, 10) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn blend_midpoint() {
        let l = layout();
        let mut atlas = AtlasState::new(&l, 0.85, 2).unwrap();
        let c = GridCoord::new(1, 2);
        atlas.danger_heuristic.set(c, 0.8);
        atlas.danger_stat.set(c, 0.2);
        atlas.epoch = 1;
        let (danger, _) = blend_final(&atlas);
        assert!((danger.at(c) - 0.5).abs() < 1e-15);
        atlas.epoch = 0;
        assert_eq!(blend_final(&atlas).0, atlas.danger_heuristic);
        atlas.epoch = 7;
        assert_eq!(blend_final(&atlas).0, atlas.danger_stat);
    }

    #[test]
    fn invalid_alpha() {
        assert!(AtlasState::new(&layout(), 1.0, 10).is_err());
        assert!(AtlasState::new(&layout(), 0.5, 0).is_err());
    }

    fn random_atlas(seed: u64, vals: &[f64]) -> AtlasState {
        let l = layout();
        let mut a = AtlasState::new(&l, 0.85, 200).unwrap();
        let mut it = vals.iter().cycle();
        a.danger_stat = a.danger_stat.map(|_| *it.next().unwrap());
        a.affinity_stat = a.affinity_stat.map(|_| *it.next().unwrap());
        a.epoch = seed % 300;
        a
    }

    proptest! {
        #[test]
        fn checkpoint_round_trip_is_byte_exact(seed in any::<u64>(), vals in prop::collection::vec(0.0f64..=1.0, 1..40)) {
            let a = random_atlas(seed, &vals);
            let text = a.to_checkpoint_text();
            let back = AtlasState::from_checkpoint_text(&text).unwrap();
            prop_assert_eq!(&back, &a);
            prop_assert_eq!(back.to_checkpoint_text(), text);
        }

        #[test]
        fn blend_stays_between_inputs(seed in any::<u64>(), vals in prop::collection::vec(0.0f64..=1.0, 1..40)) {
            let a = random_atlas(seed, &vals);
            let b = a.blend();
            for (i, v) in b.danger.values().iter().enumerate() {
                let h = a.danger_heuristic.values()[i];
                let s = a.danger_stat.values()[i];
                prop_assert!(*v >= h.min(s) && *v <= h.max(s));
            }
            for (i, v) in b.affinity.values().iter().enumerate() {
                let h = a.affinity_heuristic.values()[i];
                let s = a.affinity_stat.values()[i];
                prop_assert!(*v >= h.min(s) && *v <= h.max(s));
            }
        }

        #[test]
        fn schedule_is_monotone(k in 0u64..500, total in 1u64..300) {
            for s in [Schedule::Linear, Schedule::Cosine] {
                let b0 = s.beta(k, total);
                let b1 = s.beta(k + 1, total);
                prop_assert!((0.0..=1.0).contains(&b0));
                prop_assert!(b1 >= b0);
            }
        }
    }
}
