//! Training observer that streams CSV logs and heatmap snapshots to disk.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use atlas_core::agent::{AgentError, EpisodeRecord, EpochMetrics, PoolEvent, TrainObserver};
use atlas_core::atlas::AtlasState;
use atlas_core::memory::{heatmap_file_name, render_heatmap, write_png, Channel, InsertOutcome, PromptDocument, DEFAULT_CELL_PX};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: u64,
    pub success_rate: f64,
    pub mean_return: f64,
    pub mean_env: f64,
    pub mean_danger: f64,
    pub mean_affinity: f64,
    pub pool_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterfallRow {
    pub episode: u64,
    pub step: usize,
    pub env: f64,
    pub danger: f64,
    pub affinity: f64,
    pub format: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub episode: u64,
    pub epoch: u64,
    pub layout_seed: u64,
    pub outcome: String,
    pub steps: usize,
    pub phi_start: f64,
    pub phi_end: f64,
    pub lambda_affinity: f64,
    pub gamma_corrected: bool,
    pub blend_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolRow {
    pub epoch: u64,
    pub episode: u64,
    pub tag: String,
    pub event: String,
    pub seq: Option<u64>,
    pub similarity: Option<f64>,
    pub positives: usize,
    pub negatives: usize,
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const WATERFALL_FILE: &str = "waterfall.csv";
pub const EPISODES_FILE: &str = "episodes.csv";
pub const POOL_LOG_FILE: &str = "pool_log.csv";

type CsvOut = csv::Writer<BufWriter<File>>;

fn csv_out(path: &Path) -> Result<CsvOut, AgentError> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

fn csv_err(e: csv::Error) -> AgentError {
    AgentError::Io(std::io::Error::other(e))
}

pub struct ArtifactWriter {
    heatmap_dir: Option<PathBuf>,
    heatmap_every: u64,
    prompt_dir: Option<PathBuf>,
    metrics: CsvOut,
    waterfall: Option<CsvOut>,
    episodes: CsvOut,
    pool: Option<CsvOut>,
    lambda_affinity: f64,
    gamma_corrected: bool,
    batch_size: u64,
}

pub struct EmitOptions {
    pub heatmaps: bool,
    pub heatmap_every: u64,
    pub waterfall: bool,
    pub pool_log: bool,
    pub prompts: bool,
    pub lambda_affinity: f64,
    pub gamma_corrected: bool,
    pub batch_size: u64,
}

impl ArtifactWriter {
    pub fn create(out: &Path, opts: &EmitOptions) -> Result<Self, AgentError> {
        fs::create_dir_all(out)?;
        let sub = |on: bool, name: &str| -> Result<Option<PathBuf>, AgentError> {
            if !on {
                return Ok(None);
            }
            let d = out.join(name);
            fs::create_dir_all(&d)?;
            Ok(Some(d))
        };
        Ok(Self {
            heatmap_dir: sub(opts.heatmaps, "heatmaps")?,
            heatmap_every: opts.heatmap_every,
            prompt_dir: sub(opts.prompts && opts.heatmaps, "prompts")?,
            metrics: csv_out(&out.join(METRICS_FILE))?,
            waterfall: if opts.waterfall { Some(csv_out(&out.join(WATERFALL_FILE))?) } else { None },
            episodes: csv_out(&out.join(EPISODES_FILE))?,
            pool: if opts.pool_log { Some(csv_out(&out.join(POOL_LOG_FILE))?) } else { None },
            lambda_affinity: opts.lambda_affinity,
            gamma_corrected: opts.gamma_corrected,
            batch_size: opts.batch_size,
        })
    }

    pub fn finish(mut self) -> Result<(), AgentError> {
        self.metrics.flush()?;
        self.episodes.flush()?;
        for w in [self.waterfall.as_mut(), self.pool.as_mut()].into_iter().flatten() {
            w.flush()?;
        }
        Ok(())
    }
}

pub fn save_png(path: &Path, image: &atlas_core::memory::RgbaImage) -> Result<(), AgentError> {
    let mut f = BufWriter::new(File::create(path)?);
    write_png(image, &mut f)?;
    f.flush()?;
    Ok(())
}

impl TrainObserver for ArtifactWriter {
    fn on_atlas(&mut self, atlas: &AtlasState) -> Result<(), AgentError> {
        let Some(dir) = &self.heatmap_dir else { return Ok(()) };
        if !atlas.epoch.is_multiple_of(self.heatmap_every) {
            return Ok(());
        }
        let blend = atlas.blend();
        for (ch, map) in [(Channel::Danger, &blend.danger), (Channel::Affinity, &blend.affinity)] {
            let name = heatmap_file_name(atlas.layout_seed, atlas.epoch, ch);
            save_png(&dir.join(name), &render_heatmap(map, ch, DEFAULT_CELL_PX))?;
        }
        Ok(())
    }

    fn on_prompt(&mut self, episode: u64, step: usize, prompt: &PromptDocument) {
        let Some(dir) = &self.prompt_dir else { return };
        let epoch = episode / self.batch_size;
        if step == 0 && episode.is_multiple_of(self.batch_size) && epoch.is_multiple_of(self.heatmap_every) {
            // Best effort: a failed prompt log never aborts training.
            let _ = fs::write(dir.join(format!("prompt_epoch_{epoch}.txt")), prompt.manifest());
        }
    }

    fn on_episode(&mut self, ep: &EpisodeRecord) -> Result<(), AgentError> {
        if let Some(w) = self.waterfall.as_mut() {
            for (i, r) in ep.rewards.iter().enumerate() {
                w.serialize(WaterfallRow {
                    episode: ep.id,
                    step: i,
                    env: r.env,
                    danger: r.danger,
                    affinity: r.affinity,
                    format: r.format,
                    total: r.total,
                })
                .map_err(csv_err)?;
            }
        }
        self.episodes
            .serialize(EpisodeRow {
                episode: ep.id,
                epoch: ep.epoch,
                layout_seed: ep.layout_seed,
                outcome: format!("{:?}", ep.trajectory.outcome).to_lowercase(),
                steps: ep.trajectory.len(),
                phi_start: ep.phi_start,
                phi_end: ep.phi_end,
                lambda_affinity: self.lambda_affinity,
                gamma_corrected: self.gamma_corrected,
                blend_hash: ep.step_blend_hashes.first().map(|h| h.to_string()).unwrap_or_default(),
            })
            .map_err(csv_err)
    }

    fn on_pool_event(&mut self, ev: &PoolEvent) -> Result<(), AgentError> {
        let Some(w) = self.pool.as_mut() else { return Ok(()) };
        let row = |event: &str, seq, similarity| PoolRow {
            epoch: ev.epoch,
            episode: ev.episode,
            tag: ev.tag.as_str().to_string(),
            event: event.to_string(),
            seq,
            similarity,
            positives: ev.positives,
            negatives: ev.negatives,
        };
        match &ev.outcome {
            InsertOutcome::Inserted { seq, evicted } => {
                w.serialize(row("insert", Some(*seq), None)).map_err(csv_err)?;
                if let Some(old) = evicted {
                    w.serialize(row("evict", Some(old.inserted_at), None)).map_err(csv_err)?;
                }
            }
            InsertOutcome::Duplicate { similarity } => {
                w.serialize(row("duplicate", None, Some(*similarity))).map_err(csv_err)?;
            }
        }
        Ok(())
    }

    fn on_epoch_end(&mut self, m: &EpochMetrics) -> Result<(), AgentError> {
        self.metrics
            .serialize(MetricsRow {
                epoch: m.epoch,
                success_rate: m.success_rate,
                mean_return: m.mean_return,
                mean_env: m.mean_env,
                mean_danger: m.mean_danger,
                mean_affinity: m.mean_affinity,
                pool_size: m.pool_size,
            })
            .map_err(csv_err)
    }
}
