//! Exemplar and text-skill layers of the memory, plus heatmap rendering and prompt assembly.

mod embed;
mod exemplar;
mod prompt;
mod render;
mod skills;

use thiserror::Error;

pub use embed::{cosine_similarity, FrameEncoder, StructuralEncoder, EMBEDDING_DIM};
pub use exemplar::{
    mine_keyframes, Exemplar, ExemplarPool, ExemplarRecord, ExemplarTag, InsertOutcome, PoolManifest, Retrieved,
    DEDUP_THRESHOLD, DEFAULT_EXEMPLARS_INJECTED, MAX_KEYFRAMES_PER_TRAJECTORY, POOL_CAP_PER_TAG,
};
pub use prompt::{assemble_prompt, heatmap_file_name, ExemplarRef, PromptDocument, PromptSection, SectionAnchor};
pub use render::{render_heatmap, write_png, Channel, RgbaImage, DEFAULT_CELL_PX};
pub use skills::{
    default_rulebook, parse_rulebook, SkillBook, SkillCategory, TextSkill, DEFAULT_PRUNE_EVERY, DEFAULT_TOP_K_SKILLS,
    FROZENLAKE_RULEBOOK, SOKOBAN_RULEBOOK,
};

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("trajectory has {steps} steps but {frames} frames were supplied")]
    AlignmentMismatch { steps: usize, frames: usize },
    #[error("pool manifest: {0}")]
    Manifest(String),
    #[error("rulebook line {line}: {msg}")]
    Rulebook { line: usize, msg: String },
    #[error("image encoding: {0}")]
    Encoding(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
