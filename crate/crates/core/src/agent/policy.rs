use std::collections::HashMap;
use std::fmt::Write as _;
use std::hash::Hasher;

use fnv::FnvHasher;
use rand::{Rng, RngCore};

use super::AgentError;
use crate::gridworld::{Action, Direction, GridState};
use crate::memory::PromptDocument;

/// One shaped transition handed to [`Policy::learn`].
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: GridState,
    pub action: Action,
    pub reward: f64,
    pub next_state: GridState,
    /// True when the episode ended by success or failure. Timeouts bootstrap.
    pub done: bool,
}

/// Behaviour contract for anything that can drive an episode.
///
/// `act` must be a pure function of the observation, the policy's parameters
/// and the random stream it is handed.
pub trait Policy {
    fn act(&self, obs: &GridState, prompt: Option<&PromptDocument>, rng: &mut dyn RngCore) -> Action;

    /// Exploitation-only action choice used by greedy evaluation.
    fn act_greedy(&self, obs: &GridState, prompt: Option<&PromptDocument>, rng: &mut dyn RngCore) -> Action {
        self.act(obs, prompt, rng)
    }

    fn learn(&mut self, batch: &[Transition]);

    /// Called once before each training epoch's rollouts.
    fn begin_epoch(&mut self, _epoch: u64, _total_epochs: u64) {}

    /// Serialized parameters for checkpoints, when the policy has any.
    fn snapshot(&self) -> Option<String> {
        None
    }
}

/// Hash of the occupancy that matters for control: layout seed, player and boxes.
pub fn state_key(state: &GridState) -> u64 {
    let mut h = FnvHasher::default();
    h.write_u64(state.layout.seed);
    h.write_usize(state.player.x);
    h.write_usize(state.player.y);
    for b in &state.boxes {
        h.write_usize(b.x);
        h.write_usize(b.y);
    }
    h.finish()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentParams {
    pub learning_rate: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the training horizon over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
}

impl Default for AgentParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            gamma: 0.99,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.5,
        }
    }
}

impl AgentParams {
    pub fn epsilon_at(&self, epoch: u64, total_epochs: u64) -> f64 {
        let horizon = self.epsilon_decay_fraction * total_epochs as f64;
        let frac = if horizon <= 0.0 { 1.0 } else { (epoch as f64 / horizon).min(1.0) };
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }

    pub fn validate(&self) -> Result<(), String> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(format!("learning_rate must lie in (0, 1], got {}", self.learning_rate));
        }
        if !unit(self.gamma) || !unit(self.epsilon_start) || !unit(self.epsilon_end) || !unit(self.epsilon_decay_fraction) {
            return Err("gamma, epsilon bounds and decay fraction must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// One-step Q-learning over hashed grid states with epsilon-greedy exploration.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularAgent {
    q: HashMap<u64, [f64; 4]>,
    pub params: AgentParams,
    epsilon: f64,
}

impl TabularAgent {
    pub fn new(params: AgentParams) -> Self {
        Self {
            q: HashMap::new(),
            epsilon: params.epsilon_start,
            params,
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn set_epsilon(&mut self, epsilon: f64) {
        self.epsilon = epsilon;
    }

    pub fn q_values(&self, state: &GridState) -> [f64; 4] {
        self.q.get(&state_key(state)).copied().unwrap_or([0.0; 4])
    }

    pub fn table_len(&self) -> usize {
        self.q.len()
    }

    fn greedy(&self, obs: &GridState, rng: &mut dyn RngCore) -> Action {
        let q = self.q_values(obs);
        let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ties: Vec<usize> = (0..4).filter(|&i| q[i] == best).collect();
        let pick = ties[rng.gen_range(0..ties.len())];
        Action::Move(Direction::from_index(pick).expect("index below four"))
    }

    /// Sorted `key q_up q_down q_left q_right` lines.
    pub fn dump(&self) -> String {
        let mut keys: Vec<&u64> = self.q.keys().collect();
        keys.sort();
        let mut out = String::new();
        writeln!(out, "qtable 1 epsilon {}", self.epsilon).unwrap();
        for k in keys {
            let v = self.q[k];
            writeln!(out, "{k:016x} {} {} {} {}", v[0], v[1], v[2], v[3]).unwrap();
        }
        out
    }

    pub fn load(text: &str, params: AgentParams) -> Result<Self, AgentError> {
        let bad = |line: usize, msg: &str| AgentError::Checkpoint(format!("q-table line {line}: {msg}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad(1, "empty file"))?;
        let epsilon = match header.split_whitespace().collect::<Vec<_>>()[..] {
            ["qtable", "1", "epsilon", e] => e.parse::<f64>().map_err(|_| bad(1, "bad epsilon"))?,
            _ => return Err(bad(1, "bad header")),
        };
        let mut q = HashMap::new();
        for (i, line) in lines.enumerate() {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 5 {
                return Err(bad(i + 2, "expected a key and four values"));
            }
            let key = u64::from_str_radix(parts[0], 16).map_err(|_| bad(i + 2, "bad key"))?;
            let mut v = [0.0; 4];
            for (slot, p) in v.iter_mut().zip(&parts[1..]) {
                *slot = p.parse().map_err(|_| bad(i + 2, "bad value"))?;
            }
            q.insert(key, v);
        }
        Ok(Self { q, params, epsilon })
    }
}

impl Policy for TabularAgent {
    fn act(&self, obs: &GridState, _prompt: Option<&PromptDocument>, rng: &mut dyn RngCore) -> Action {
        if rng.gen::<f64>() < self.epsilon {
            Action::Move(Direction::ALL[rng.gen_range(0..4)])
        } else {
            self.greedy(obs, rng)
        }
    }

    fn act_greedy(&self, obs: &GridState, _prompt: Option<&PromptDocument>, rng: &mut dyn RngCore) -> Action {
        self.greedy(obs, rng)
    }

    fn learn(&mut self, batch: &[Transition]) {
        let AgentParams { learning_rate: lr, gamma, .. } = self.params;
        for t in batch {
            let Some(dir) = t.action.direction() else { continue };
            let next_best = if t.done {
                0.0
            } else {
                self.q_values(&t.next_state).iter().copied().fold(f64::NEG_INFINITY, f64::max)
            };
            let entry = self.q.entry(state_key(&t.state)).or_insert([0.0; 4]);
            let a = dir.index();
            entry[a] += lr * (t.reward + gamma * next_best - entry[a]);
        }
    }

    fn begin_epoch(&mut self, epoch: u64, total_epochs: u64) {
        self.epsilon = self.params.epsilon_at(epoch, total_epochs);
    }

    fn snapshot(&self) -> Option<String> {
        Some(self.dump())
    }
}

/// Replaces the wrapped policy's output with a malformed emission at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MalformedInjector<P> {
    pub inner: P,
    pub rate: f64,
}

impl<P: Policy> Policy for MalformedInjector<P> {
    fn act(&self, obs: &GridState, prompt: Option<&PromptDocument>, rng: &mut dyn RngCore) -> Action {
        let roll = rng.gen::<f64>();
        let action = self.inner.act(obs, prompt, rng);
        if roll < self.rate {
            Action::Malformed
        } else {
            action
        }
    }

    fn act_greedy(&self, obs: &GridState, prompt: Option<&PromptDocument>, rng: &mut dyn RngCore) -> Action {
        self.inner.act_greedy(obs, prompt, rng)
    }

    fn learn(&mut self, batch: &[Transition]) {
        self.inner.learn(batch)
    }

    fn begin_epoch(&mut self, epoch: u64, total_epochs: u64) {
        self.inner.begin_epoch(epoch, total_epochs)
    }

    fn snapshot(&self) -> Option<String> {
        self.inner.snapshot()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{generate_sokoban, step, GridCoord};
    use crate::reward::RewardConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn epsilon_schedule_endpoints() {
        let p = AgentParams::default();
        assert_eq!(p.epsilon_at(0, 200), 1.0);
        assert!((p.epsilon_at(50, 200) - 0.525).abs() < 1e-12);
        assert!((p.epsilon_at(100, 200) - 0.05).abs() < 1e-12);
        assert!((p.epsilon_at(199, 200) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn state_key_tracks_occupancy_only() {
        let s = generate_sokoban(4, 6, 6, 1).unwrap();
        let mut later = s.clone();
        later.step_index = 17;
        assert_eq!(state_key(&s), state_key(&later));
        let mut moved = s.clone();
        moved.player = GridCoord::new(s.player.x ^ 1, s.player.y);
        assert_ne!(state_key(&s), state_key(&moved));
    }

    #[test]
    fn q_update_moves_toward_target() {
        let s = generate_sokoban(4, 6, 6, 1).unwrap();
        let mut agent = TabularAgent::new(AgentParams::default());
        let action = Action::Move(Direction::Up);
        let (next, _) = step(&s, action, &RewardConfig::sokoban()).unwrap();
        agent.learn(&[Transition { state: s.clone(), action, reward: 1.0, next_state: next, done: true }]);
        assert!((agent.q_values(&s)[Direction::Up.index()] - 0.1).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert_eq!(agent.act_greedy(&s, None, &mut rng), action);
        }
    }

    #[test]
    fn ties_are_broken_at_random() {
        let s = generate_sokoban(4, 6, 6, 1).unwrap();
        let agent = TabularAgent::new(AgentParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut seen = [false; 4];
        for _ in 0..200 {
            seen[agent.act_greedy(&s, None, &mut rng).direction().unwrap().index()] = true;
        }
        assert_eq!(seen, [true; 4]);
    }

    #[test]
    fn dump_round_trips() {
        let s = generate_sokoban(4, 6, 6, 1).unwrap();
        let mut agent = TabularAgent::new(AgentParams::default());
        for (i, d) in Direction::ALL.into_iter().enumerate() {
            let (next, _) = step(&s, Action::Move(d), &RewardConfig::sokoban()).unwrap();
            agent.learn(&[Transition { state: s.clone(), action: Action::Move(d), reward: 0.3 * i as f64 - 0.1, next_state: next, done: false }]);
        }
        agent.set_epsilon(0.37);
        let back = TabularAgent::load(&agent.dump(), agent.params).unwrap();
        assert_eq!(back, agent);
        assert!(TabularAgent::load("garbage", agent.params).is_err());
    }

    #[test]
    fn injector_emits_malformed_at_full_rate() {
        let s = generate_sokoban(4, 6, 6, 1).unwrap();
        let p = MalformedInjector { inner: TabularAgent::new(AgentParams::default()), rate: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(p.act(&s, None, &mut rng), Action::Malformed);
        assert!(p.act_greedy(&s, None, &mut rng).is_well_formed());
    }
}
