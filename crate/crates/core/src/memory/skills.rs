//! Rulebook-sourced text skills.
//!
//! Skills are read from a static per-environment rulebook and never written
//! by the system. The only thing that evolves is their ranking: relevance
//! hit counters are folded into the order every `prune_every` updates.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use super::MemoryError;
use crate::gridworld::EnvKind;

pub const DEFAULT_TOP_K_SKILLS: usize = 3;
pub const DEFAULT_PRUNE_EVERY: u64 = 10;

pub const SOKOBAN_RULEBOOK: &str = include_str!("../../rulebooks/sokoban.md");
pub const FROZENLAKE_RULEBOOK: &str = include_str!("../../rulebooks/frozenlake.md");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SkillCategory {
    GeneralPrinciples,
    PushStrategies,
    MistakesToAvoid,
}

impl SkillCategory {
    pub const ALL: [SkillCategory; 3] = [
        SkillCategory::GeneralPrinciples,
        SkillCategory::PushStrategies,
        SkillCategory::MistakesToAvoid,
    ];

    pub fn heading(self) -> &'static str {
        match self {
            SkillCategory::GeneralPrinciples => "General Principles",
            SkillCategory::PushStrategies => "Push Strategies",
            SkillCategory::MistakesToAvoid => "Mistakes to Avoid",
        }
    }

    fn from_heading(h: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.heading() == h)
    }
}

impl fmt::Display for SkillCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.heading())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextSkill {
    pub category: SkillCategory,
    pub text: String,
    /// Larger is more important.
    pub priority: i64,
}

/// Parses a rulebook: `## <category>` headings followed by `<priority> <text>` lines.
/// Blank lines and a leading `# ` title are ignored.
pub fn parse_rulebook(text: &str) -> Result<Vec<TextSkill>, MemoryError> {
    let mut skills = Vec::new();
    let mut current = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let bad = |msg: String| MemoryError::Rulebook { line: i + 1, msg };
        if line.is_empty() {
            continue;
        }
        if let Some(h) = line.strip_prefix("## ") {
            current = Some(SkillCategory::from_heading(h.trim()).ok_or_else(|| bad(format!("unknown section {h:?}")))?);
            continue;
        }
        if line.starts_with("# ") && current.is_none() && skills.is_empty() {
            continue;
        }
        let category = current.ok_or_else(|| bad("skill line before any section heading".into()))?;
        let (prio, rest) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| bad("expected `<priority> <text>`".into()))?;
        let priority = prio.parse::<i64>().map_err(|_| bad(format!("priority {prio:?} is not an integer")))?;
        skills.push(TextSkill {
            category,
            text: rest.trim().to_string(),
            priority,
        });
    }
    Ok(skills)
}

pub fn default_rulebook(kind: EnvKind) -> &'static str {
    match kind {
        EnvKind::Sokoban => SOKOBAN_RULEBOOK,
        EnvKind::FrozenLake => FROZENLAKE_RULEBOOK,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkillBook {
    skills: Vec<TextSkill>,
    hits: Vec<u64>,
    order: Vec<usize>,
    updates: u64,
    prune_every: u64,
}

impl SkillBook {
    pub fn new(skills: Vec<TextSkill>) -> Self {
        let hits = vec![0; skills.len()];
        let mut book = Self {
            order: (0..skills.len()).collect(),
            skills,
            hits,
            updates: 0,
            prune_every: DEFAULT_PRUNE_EVERY,
        };
        book.rerank();
        book
    }

    pub fn from_rulebook(text: &str) -> Result<Self, MemoryError> {
        Ok(Self::new(parse_rulebook(text)?))
    }

    pub fn for_env(kind: EnvKind) -> Self {
        Self::from_rulebook(default_rulebook(kind)).expect("bundled rulebooks parse")
    }

    pub fn with_prune_every(mut self, every: u64) -> Self {
        self.prune_every = every.max(1);
        self
    }

    pub fn len(&self) -> usize {
        self.skills.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skills.is_empty()
    }

    pub fn skills(&self) -> &[TextSkill] {
        &self.skills
    }

    pub fn hits(&self) -> &[u64] {
        &self.hits
    }

    /// First `k` skills in the current ranking.
    pub fn top_k(&self, k: usize) -> Vec<&TextSkill> {
        self.order.iter().take(k).map(|&i| &self.skills[i]).collect()
    }

    pub fn record_hit(&mut self, category: SkillCategory) {
        for (i, s) in self.skills.iter().enumerate() {
            if s.category == category {
                self.hits[i] += 1;
            }
        }
    }

    /// Counts one memory update; re-ranks on every `prune_every`-th call.
    pub fn record_update(&mut self) {
        self.updates += 1;
        if self.updates.is_multiple_of(self.prune_every) {
            self.rerank();
        }
    }

    fn rerank(&mut self) {
        let (skills, hits) = (&self.skills, &self.hits);
        self.order
            .sort_by(|&a, &b| skills[b].priority.cmp(&skills[a].priority).then(hits[b].cmp(&hits[a])).then(a.cmp(&b)));
    }

    /// Restores counters and ranking written by [`SkillBook::state_text`] onto the same rulebook.
    pub fn restore_state(&mut self, text: &str) -> Result<(), MemoryError> {
        let bad = |line: usize, msg: &str| MemoryError::Rulebook { line, msg: msg.to_string() };
        let mut lines = text.lines();
        self.updates = lines
            .next()
            .and_then(|l| l.strip_prefix("updates "))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(1, "expected `updates <n>`"))?;
        let mut order = Vec::with_capacity(self.skills.len());
        for (i, line) in lines.enumerate() {
            let parts: Vec<&str> = line.splitn(4, '\t').collect();
            let [heading, prio, hits, body] = parts[..] else {
                return Err(bad(i + 2, "expected four tab-separated fields"));
            };
            let idx = self
                .skills
                .iter()
                .position(|s| s.category.heading() == heading && s.text == body && s.priority.to_string() == prio)
                .ok_or_else(|| bad(i + 2, "skill not present in the rulebook"))?;
            self.hits[idx] = hits.parse().map_err(|_| bad(i + 2, "bad hit count"))?;
            order.push(idx);
        }
        if order.len() != self.skills.len() {
            return Err(bad(0, "ranking does not cover the rulebook"));
        }
        self.order = order;
        Ok(())
    }

    /// Canonical text of the ranking state, for digests and checkpoints.
    pub fn state_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "updates {}", self.updates).unwrap();
        for &i in &self.order {
            let s = &self.skills[i];
            writeln!(out, "{}\t{}\t{}\t{}", s.category.heading(), s.priority, self.hits[i], s.text).unwrap();
        }
        out
    }
}
