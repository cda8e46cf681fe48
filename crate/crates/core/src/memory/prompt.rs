//! Augmented observation document: skill maps, exemplars, principles, then the observation.

use std::fmt::Write as _;
use std::sync::Arc;

use super::embed::FrameEncoder;
use super::exemplar::{ExemplarPool, ExemplarTag, DEFAULT_EXEMPLARS_INJECTED};
use super::render::{render_heatmap, Channel, RgbaImage};
use super::skills::{SkillBook, TextSkill};
use crate::atlas::BlendedAtlas;
use crate::gridworld::{state_to_text, GridState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SectionAnchor {
    SpatialSkillMaps,
    VisualExemplars,
    LearnedPrinciples,
    CurrentObservation,
}

impl SectionAnchor {
    pub fn heading(self) -> &'static str {
        match self {
            SectionAnchor::SpatialSkillMaps => "## Spatial Skill Maps",
            SectionAnchor::VisualExemplars => "## Visual Exemplars",
            SectionAnchor::LearnedPrinciples => "## Learned Principles",
            SectionAnchor::CurrentObservation => "[Initial Observation]",
        }
    }
}

/// A retrieved exemplar as referenced from a prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct ExemplarRef {
    pub tag: ExemplarTag,
    pub similarity: f64,
    pub inserted_at: u64,
    pub frame: String,
}

impl ExemplarRef {
    pub fn file_name(&self) -> String {
        format!("exemplar_{}_{}.txt", self.inserted_at, self.tag.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PromptSection {
    SpatialSkillMaps(Arc<BlendedAtlas>),
    VisualExemplars(Vec<ExemplarRef>),
    LearnedPrinciples(Vec<TextSkill>),
    CurrentObservation(String),
}

impl PromptSection {
    pub fn anchor(&self) -> SectionAnchor {
        match self {
            PromptSection::SpatialSkillMaps(_) => SectionAnchor::SpatialSkillMaps,
            PromptSection::VisualExemplars(_) => SectionAnchor::VisualExemplars,
            PromptSection::LearnedPrinciples(_) => SectionAnchor::LearnedPrinciples,
            PromptSection::CurrentObservation(_) => SectionAnchor::CurrentObservation,
        }
    }
}

pub fn heatmap_file_name(layout_seed: u64, epoch: u64, channel: Channel) -> String {
    format!("atlas_{layout_seed}_{epoch}_{}.png", channel.as_str())
}

/// Sections are stored in anchor order. Images are rendered lazily.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptDocument {
    pub sections: Vec<PromptSection>,
}

impl PromptDocument {
    pub fn anchors(&self) -> Vec<SectionAnchor> {
        self.sections.iter().map(PromptSection::anchor).collect()
    }

    pub fn section(&self, anchor: SectionAnchor) -> Option<&PromptSection> {
        self.sections.iter().find(|s| s.anchor() == anchor)
    }

    pub fn atlas(&self) -> Option<&Arc<BlendedAtlas>> {
        self.sections.iter().find_map(|s| match s {
            PromptSection::SpatialSkillMaps(a) => Some(a),
            _ => None,
        })
    }

    pub fn exemplars(&self) -> &[ExemplarRef] {
        self.sections
            .iter()
            .find_map(|s| match s {
                PromptSection::VisualExemplars(e) => Some(e.as_slice()),
                _ => None,
            })
            .unwrap_or(&[])
    }

    pub fn skills(&self) -> &[TextSkill] {
        self.sections
            .iter()
            .find_map(|s| match s {
                PromptSection::LearnedPrinciples(k) => Some(k.as_slice()),
                _ => None,
            })
            .unwrap_or(&[])
    }

    /// The two skill-map images with their file names.
    pub fn render_maps(&self, cell_px: u32) -> Vec<(String, RgbaImage)> {
        let Some(atlas) = self.atlas() else { return Vec::new() };
        [(Channel::Danger, &atlas.danger), (Channel::Affinity, &atlas.affinity)]
            .into_iter()
            .map(|(ch, map)| (heatmap_file_name(atlas.layout_seed, atlas.epoch, ch), render_heatmap(map, ch, cell_px)))
            .collect()
    }

    /// Structured text listing anchors, image references, skills and the observation.
    pub fn manifest(&self) -> String {
        let mut out = String::new();
        for section in &self.sections {
            writeln!(out, "{}", section.anchor().heading()).unwrap();
            match section {
                PromptSection::SpatialSkillMaps(a) => {
                    for ch in [Channel::Danger, Channel::Affinity] {
                        writeln!(out, "{}: {}", ch.as_str(), heatmap_file_name(a.layout_seed, a.epoch, ch)).unwrap();
                    }
                }
                PromptSection::VisualExemplars(refs) => {
                    for r in refs {
                        writeln!(out, "[{}] {} similarity={:.6}", r.tag.as_str(), r.file_name(), r.similarity).unwrap();
                    }
                }
                PromptSection::LearnedPrinciples(skills) => {
                    for s in skills {
                        writeln!(out, "- [{}] {}", s.category, s.text).unwrap();
                    }
                }
                PromptSection::CurrentObservation(text) => out.push_str(text),
            }
        }
        out
    }
}

/// Builds the augmented observation for `obs`. Exemplar and principle sections
/// are left out when the pool or the selection is empty.
pub fn assemble_prompt(
    atlas: Arc<BlendedAtlas>,
    pool: &ExemplarPool,
    skills: &SkillBook,
    obs: &GridState,
    top_k_skills: usize,
    encoder: &dyn FrameEncoder,
) -> PromptDocument {
    let mut sections = vec![PromptSection::SpatialSkillMaps(atlas)];
    let retrieved = pool.retrieve_for(obs, encoder, DEFAULT_EXEMPLARS_INJECTED);
    if !retrieved.is_empty() {
        sections.push(PromptSection::VisualExemplars(
            retrieved
                .into_iter()
                .map(|r| ExemplarRef {
                    tag: r.exemplar.tag,
                    similarity: r.similarity,
                    inserted_at: r.exemplar.inserted_at,
                    frame: state_to_text(&r.exemplar.frame),
                })
                .collect(),
        ));
    }
    let top: Vec<TextSkill> = skills.top_k(top_k_skills).into_iter().cloned().collect();
    if !top.is_empty() {
        sections.push(PromptSection::LearnedPrinciples(top));
    }
    sections.push(PromptSection::CurrentObservation(state_to_text(obs)));
    PromptDocument { sections }
}
