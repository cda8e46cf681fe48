//! Self-evolving danger and affinity heatmaps for grid-world agents, with
//! heatmap-grounded reward shaping, an exemplar and rulebook memory, and a
//! tabular reference learner.

pub mod agent;
pub mod atlas;
pub mod gridworld;
pub mod heatmap;
pub mod heuristics;
pub mod memory;
pub mod reward;
