use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::embed::{cosine_similarity, FrameEncoder};
use super::MemoryError;
use crate::gridworld::{parse_state, state_to_text, EnvKind, GridState, Outcome, Trajectory};

pub const POOL_CAP_PER_TAG: usize = 3;
pub const DEFAULT_EXEMPLARS_INJECTED: usize = 4;
pub const DEDUP_THRESHOLD: f64 = 0.999;
pub const MAX_KEYFRAMES_PER_TRAJECTORY: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExemplarTag {
    Positive,
    Negative,
}

impl ExemplarTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ExemplarTag::Positive => "positive",
            ExemplarTag::Negative => "negative",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exemplar {
    pub frame: GridState,
    pub tag: ExemplarTag,
    pub embedding: Vec<f64>,
    /// Pool sequence number; assigned on insertion.
    pub inserted_at: u64,
    pub source_episode: u64,
}

impl Exemplar {
    pub fn new(frame: GridState, tag: ExemplarTag, source_episode: u64, encoder: &dyn FrameEncoder) -> Self {
        let embedding = encoder.embed(&frame);
        Self {
            frame,
            tag,
            embedding,
            inserted_at: 0,
            source_episode,
        }
    }
}

/// Extracts inflection frames from one episode.
///
/// `frames[i]` is the state after step `i`; `initial` is the state before
/// step 0. A failure yields the frame just before its terminal step, tagged
/// negative. A success yields the frame at each sub-goal completion (a box
/// landing on a target, or the player reaching the goal), tagged positive,
/// keeping the last two.
pub fn mine_keyframes(
    trajectory: &Trajectory,
    initial: &GridState,
    frames: &[GridState],
    source_episode: u64,
    encoder: &dyn FrameEncoder,
) -> Result<Vec<Exemplar>, MemoryError> {
    if frames.len() != trajectory.steps.len() {
        return Err(MemoryError::AlignmentMismatch {
            steps: trajectory.steps.len(),
            frames: frames.len(),
        });
    }
    let before = |i: usize| if i == 0 { initial } else { &frames[i - 1] };
    match trajectory.outcome {
        Outcome::Failure => {
            if frames.is_empty() {
                return Ok(Vec::new());
            }
            let frame = before(frames.len() - 1).clone();
            Ok(vec![Exemplar::new(frame, ExemplarTag::Negative, source_episode, encoder)])
        }
        Outcome::Success => {
            let completions: Vec<usize> = (0..frames.len())
                .filter(|&i| {
                    let (pre, post) = (before(i), &frames[i]);
                    match post.layout.kind {
                        EnvKind::Sokoban => post.boxes_on_target() > pre.boxes_on_target(),
                        EnvKind::FrozenLake => post.success_holds() && !pre.success_holds(),
                    }
                })
                .collect();
            let keep = completions.len().saturating_sub(MAX_KEYFRAMES_PER_TRAJECTORY);
            Ok(completions[keep..]
                .iter()
                .map(|&i| Exemplar::new(frames[i].clone(), ExemplarTag::Positive, source_episode, encoder))
                .collect())
        }
        Outcome::Timeout => Ok(Vec::new()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InsertOutcome {
    Inserted { seq: u64, evicted: Option<Exemplar> },
    Duplicate { similarity: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved<'a> {
    pub exemplar: &'a Exemplar,
    pub similarity: f64,
}

/// Two FIFO classes of tagged keyframes, each capped at [`POOL_CAP_PER_TAG`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExemplarPool {
    positives: VecDeque<Exemplar>,
    negatives: VecDeque<Exemplar>,
    sequence_counter: u64,
    cap: usize,
}

impl Default for ExemplarPool {
    fn default() -> Self {
        Self::with_cap(POOL_CAP_PER_TAG)
    }
}

impl ExemplarPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_cap(cap: usize) -> Self {
        Self {
            positives: VecDeque::with_capacity(cap + 1),
            negatives: VecDeque::with_capacity(cap + 1),
            sequence_counter: 0,
            cap,
        }
    }

    pub fn cap_per_tag(&self) -> usize {
        self.cap
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn class(&self, tag: ExemplarTag) -> &VecDeque<Exemplar> {
        match tag {
            ExemplarTag::Positive => &self.positives,
            ExemplarTag::Negative => &self.negatives,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Exemplar> {
        self.positives.iter().chain(self.negatives.iter())
    }

    pub fn sequence_counter(&self) -> u64 {
        self.sequence_counter
    }

    /// Appends `candidate` to its class, evicting that class's oldest member past the cap.
    /// Near-duplicates of a same-class member are rejected and leave the pool untouched.
    pub fn insert_with_eviction(&mut self, mut candidate: Exemplar) -> InsertOutcome {
        let cap = self.cap;
        let class = match candidate.tag {
            ExemplarTag::Positive => &mut self.positives,
            ExemplarTag::Negative => &mut self.negatives,
        };
        if let Some(similarity) = class
            .iter()
            .map(|e| cosine_similarity(&e.embedding, &candidate.embedding))
            .find(|&s| s > DEDUP_THRESHOLD)
        {
            return InsertOutcome::Duplicate { similarity };
        }
        let seq = self.sequence_counter;
        self.sequence_counter += 1;
        candidate.inserted_at = seq;
        class.push_back(candidate);
        let evicted = if class.len() > cap { class.pop_front() } else { None };
        InsertOutcome::Inserted { seq, evicted }
    }

    /// Top `k` by cosine similarity across both classes; ties go to the newer exemplar.
    pub fn retrieve_top_k(&self, query: &[f64], k: usize) -> Vec<Retrieved<'_>> {
        let mut scored: Vec<Retrieved<'_>> = self
            .iter()
            .map(|e| Retrieved {
                exemplar: e,
                similarity: cosine_similarity(query, &e.embedding),
            })
            .collect();
        scored.sort_by(|a, b| {
            b.similarity
                .total_cmp(&a.similarity)
                .then(b.exemplar.inserted_at.cmp(&a.exemplar.inserted_at))
        });
        scored.truncate(k);
        scored
    }

    pub fn retrieve_for(&self, obs: &GridState, encoder: &dyn FrameEncoder, k: usize) -> Vec<Retrieved<'_>> {
        if self.is_empty() || k == 0 {
            return Vec::new();
        }
        self.retrieve_top_k(&encoder.embed(obs), k)
    }

    pub fn to_manifest(&self) -> PoolManifest {
        PoolManifest {
            cap_per_tag: self.cap,
            sequence_counter: self.sequence_counter,
            exemplars: self
                .iter()
                .map(|e| ExemplarRecord {
                    tag: e.tag,
                    inserted_at: e.inserted_at,
                    source_episode: e.source_episode,
                    layout_seed: e.frame.layout.seed,
                    frame: state_to_text(&e.frame),
                })
                .collect(),
        }
    }

    pub fn from_manifest(manifest: &PoolManifest, encoder: &dyn FrameEncoder) -> Result<Self, MemoryError> {
        let mut pool = Self::with_cap(manifest.cap_per_tag);
        pool.sequence_counter = manifest.sequence_counter;
        for rec in &manifest.exemplars {
            let frame = parse_state(&rec.frame, rec.layout_seed).map_err(|e| MemoryError::Manifest(e.to_string()))?;
            let mut ex = Exemplar::new(frame, rec.tag, rec.source_episode, encoder);
            ex.inserted_at = rec.inserted_at;
            let class = match rec.tag {
                ExemplarTag::Positive => &mut pool.positives,
                ExemplarTag::Negative => &mut pool.negatives,
            };
            class.push_back(ex);
            if class.len() > pool.cap {
                return Err(MemoryError::Manifest(format!("more than {} {} exemplars", pool.cap, rec.tag.as_str())));
            }
        }
        Ok(pool)
    }
}

/// Serializable pool contents; embeddings are recomputed on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolManifest {
    pub cap_per_tag: usize,
    pub sequence_counter: u64,
    pub exemplars: Vec<ExemplarRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarRecord {
    pub tag: ExemplarTag,
    pub inserted_at: u64,
    pub source_episode: u64,
    pub layout_seed: u64,
    pub frame: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{generate_sokoban, parse_state, replay, Action, Direction};
    use crate::memory::embed::StructuralEncoder;
    use crate::reward::RewardConfig;

    fn distinct_frames(n: usize) -> Vec<GridState> {
        (0..n as u64).map(|s| generate_sokoban(100 + s, 7, 7, 1).unwrap()).collect()
    }

    #[test]
    fn fourth_positive_evicts_the_oldest() {
        let enc = StructuralEncoder;
        let mut pool = ExemplarPool::new();
        let frames = distinct_frames(4);
        for (i, f) in frames.iter().enumerate() {
            pool.insert_with_eviction(Exemplar::new(f.clone(), ExemplarTag::Positive, i as u64, &enc));
        }
        let kept: Vec<u64> = pool.class(ExemplarTag::Positive).iter().map(|e| e.source_episode).collect();
        assert_eq!(kept, vec![1, 2, 3]);
        assert_eq!(pool.len(), 3);
    }

    #[test]
    fn duplicates_are_rejected() {
        let enc = StructuralEncoder;
        let mut pool = ExemplarPool::new();
        let f = distinct_frames(1).remove(0);
        assert!(matches!(pool.insert_with_eviction(Exemplar::new(f.clone(), ExemplarTag::Negative, 0, &enc)), InsertOutcome::Inserted { seq: 0, evicted: None }));
        let before = pool.clone();
        assert!(matches!(pool.insert_with_eviction(Exemplar::new(f.clone(), ExemplarTag::Negative, 1, &enc)), InsertOutcome::Duplicate { .. }));
        assert_eq!(pool, before);
        // The same frame under the other tag is a different class.
        assert!(matches!(pool.insert_with_eviction(Exemplar::new(f, ExemplarTag::Positive, 2, &enc)), InsertOutcome::Inserted { .. }));
    }

    #[test]
    fn retrieval_ranks_exact_match_first() {
        let enc = StructuralEncoder;
        let mut pool = ExemplarPool::new();
        assert!(pool.retrieve_for(&distinct_frames(1)[0], &enc, 4).is_empty());
        let frames = distinct_frames(6);
        for (i, f) in frames.iter().enumerate() {
            let tag = if i % 2 == 0 { ExemplarTag::Positive } else { ExemplarTag::Negative };
            pool.insert_with_eviction(Exemplar::new(f.clone(), tag, i as u64, &enc));
        }
        let hits = pool.retrieve_for(&frames[3], &enc, 4);
        assert_eq!(hits.len(), 4);
        assert_eq!(hits[0].exemplar.source_episode, 3);
        assert!(hits.windows(2).all(|w| w[0].similarity >= w[1].similarity));
        assert_eq!(pool.retrieve_for(&frames[3], &enc, 10).len(), 6);
    }

    fn cfg() -> RewardConfig {
        RewardConfig::sokoban()
    }

    #[test]
    fn failure_mines_the_frame_before_the_terminal_step() {
        let enc = StructuralEncoder;
        // Nine moves that leave the box alone, then a push into the top-left corner.
        let s = parse_state("6 5\n######\n#.BP.#\n#....#\n#...T#\n######\n", 1).unwrap();
        let mut actions: Vec<Action> = [Direction::Down, Direction::Up].repeat(4).into_iter().map(Action::Move).collect();
        actions.push(Action::Move(Direction::Up));
        actions.push(Action::Move(Direction::Left));
        let (t, frames) = replay(&s, actions, &cfg());
        assert_eq!(t.outcome, Outcome::Failure);
        assert_eq!(t.steps.len(), 10);
        let got = mine_keyframes(&t, &s, &frames, 7, &enc).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].tag, ExemplarTag::Negative);
        assert_eq!(got[0].frame, frames[8]);
    }

    #[test]
    fn immediate_failure_mines_the_initial_frame() {
        let enc = StructuralEncoder;
        let s = parse_state("5 4\n#####\n#..T#\n#.BP#\n#####\n", 1).unwrap();
        let (t, frames) = replay(&s, [Action::Move(Direction::Left)], &cfg());
        assert_eq!(t.outcome, Outcome::Failure);
        let got = mine_keyframes(&t, &s, &frames, 0, &enc).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].frame, s);
    }

    #[test]
    fn success_mines_subgoal_frames() {
        let enc = StructuralEncoder;
        let s = parse_state("7 4\n#######\n#.PB.T#\n#.....#\n#######\n", 1).unwrap();
        let actions = [Direction::Down, Direction::Up, Direction::Down, Direction::Up, Direction::Right, Direction::Right]
            .map(Action::Move);
        let (t, frames) = replay(&s, actions, &cfg());
        assert_eq!(t.outcome, Outcome::Success);
        let got = mine_keyframes(&t, &s, &frames, 0, &enc).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].tag, ExemplarTag::Positive);
        assert_eq!(got[0].frame, frames[5]);
    }

    #[test]
    fn misaligned_frames_rejected() {
        let enc = StructuralEncoder;
        let s = generate_sokoban(1, 6, 6, 1).unwrap();
        let (t, frames) = replay(&s, [Action::Move(Direction::Up)], &cfg());
        assert!(matches!(mine_keyframes(&t, &s, &frames[..0], 0, &enc), Err(MemoryError::AlignmentMismatch { .. })));
    }

    #[test]
    fn manifest_round_trip() {
        let enc = StructuralEncoder;
        let mut pool = ExemplarPool::new();
        for (i, f) in distinct_frames(5).into_iter().enumerate() {
            let tag = if i < 2 { ExemplarTag::Negative } else { ExemplarTag::Positive };
            pool.insert_with_eviction(Exemplar::new(f, tag, i as u64, &enc));
        }
        let m = pool.to_manifest();
        let back = ExemplarPool::from_manifest(&m, &enc).unwrap();
        assert_eq!(back.to_manifest(), m);
        assert_eq!(back.len(), 5);
    }
}
