use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use atlas_core::agent::{load_checkpoint, AgentError, MalformedInjector, TabularAgent, TrainingRun};
use atlas_core::memory::{heatmap_file_name, render_heatmap, Channel, DEFAULT_CELL_PX};
use serde::Serialize;

use crate::artifacts::{save_png, ArtifactWriter, EmitOptions, EpisodeRow, WaterfallRow, EPISODES_FILE, WATERFALL_FILE};
use crate::config::RunConfig;
use crate::plot::waterfall_plot;
use crate::CliError;

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn agent_error(e: AgentError) -> CliError {
    match e {
        AgentError::ConfigInvalid(m) => CliError::Config(m),
        AgentError::SeedOverlap(s) => CliError::Leakage(format!("evaluation seed {s} was used in training")),
        AgentError::Checkpoint(m) => CliError::Checkpoint(m),
        other => CliError::Runtime(other.to_string()),
    }
}

fn with_overrides(path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if let Some(o) = out {
        cfg.output_dir = o.to_path_buf();
    }
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub output_dir: PathBuf,
    pub epochs: u64,
    pub final_success: f64,
    pub first_epoch_at_080: Option<u64>,
    pub memory_digest: String,
}

/// `train <config>`: runs training and writes every artifact under the output directory.
pub fn cmd_train(config_path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<TrainSummary, CliError> {
    let cfg = with_overrides(config_path, seed, out)?;
    let train = cfg.train_config()?;
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out).map_err(runtime)?;
    fs::write(out.join("config.toml"), cfg.to_canonical()).map_err(runtime)?;

    let policy = MalformedInjector {
        inner: TabularAgent::new(train.agent),
        rate: cfg.malformed_rate,
    };
    let mut run = TrainingRun::new(train.clone(), policy).map_err(agent_error)?;
    let mut writer = ArtifactWriter::create(
        &out,
        &EmitOptions {
            heatmaps: cfg.emit_heatmaps,
            heatmap_every: cfg.heatmap_every,
            waterfall: cfg.emit_waterfall,
            pool_log: cfg.emit_pool_log,
            prompts: cfg.assemble_prompts,
            lambda_affinity: train.reward.lambda_affinity,
            gamma_corrected: train.reward.use_gamma_correction,
            batch_size: cfg.batch_size as u64,
        },
    )
    .map_err(runtime)?;
    run.train(cfg.epochs, &mut writer).map_err(agent_error)?;
    writer.finish().map_err(runtime)?;

    let metrics = run.metrics();
    let summary = TrainSummary {
        output_dir: out.clone(),
        epochs: metrics.len() as u64,
        final_success: metrics.last().map_or(0.0, |m| m.success_rate),
        first_epoch_at_080: metrics.iter().find(|m| m.success_rate >= 0.8).map(|m| m.epoch),
        memory_digest: run.memory_digest(),
    };
    let mut text = String::new();
    writeln!(text, "epochs {}", summary.epochs).unwrap();
    writeln!(text, "final_success_rate {}", summary.final_success).unwrap();
    match summary.first_epoch_at_080 {
        Some(e) => writeln!(text, "first_epoch_at_0.8 {e}").unwrap(),
        None => writeln!(text, "first_epoch_at_0.8 never").unwrap(),
    }
    writeln!(text, "pool_size {}", run.pool().len()).unwrap();
    writeln!(text, "q_table_states {}", run.policy.inner.table_len()).unwrap();
    writeln!(text, "memory_digest {}", summary.memory_digest).unwrap();
    fs::write(out.join("summary.txt"), &text).map_err(runtime)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct EvalRow {
    episode: usize,
    layout_seed: u64,
    outcome: String,
    steps: usize,
    total_return: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub success_rate: f64,
    pub episodes: usize,
    pub csv_path: PathBuf,
}

/// `eval <config> <checkpoint>`: scores a saved run on held-out layouts.
pub fn cmd_eval(config_path: &Path, checkpoint: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<EvalSummary, CliError> {
    let cfg = with_overrides(config_path, seed, out)?;
    let ckpt = load_checkpoint(checkpoint).map_err(|e| CliError::Checkpoint(e.to_string()))?;
    let trained: BTreeSet<u64> = ckpt.layout_seeds();
    if let Some(s) = cfg.eval_seeds.iter().find(|s| trained.contains(s)) {
        return Err(CliError::Leakage(format!(
            "evaluation seed {s} is a training layout of checkpoint {}",
            checkpoint.display()
        )));
    }
    if cfg.eval_seeds.is_empty() {
        return Err(CliError::Config("field `eval_seeds`: must not be empty for eval".into()));
    }
    let train = cfg.train_config()?;
    let q = ckpt
        .qtable
        .as_deref()
        .ok_or_else(|| CliError::Checkpoint(format!("{} has no qtable.txt", checkpoint.display())))?;
    let agent = TabularAgent::load(q, train.agent).map_err(|e| CliError::Checkpoint(e.to_string()))?;
    let policy = MalformedInjector {
        inner: agent,
        rate: cfg.malformed_rate,
    };
    let run = TrainingRun::restore(train, policy, &ckpt).map_err(|e| match e {
        AgentError::Memory(m) => CliError::Checkpoint(m.to_string()),
        other => agent_error(other),
    })?;
    let result = run
        .evaluate(cfg.eval_episodes, cfg.eval_greedy, &cfg.eval_seeds)
        .map_err(agent_error)?;

    fs::create_dir_all(&cfg.output_dir).map_err(runtime)?;
    let csv_path = cfg.output_dir.join("eval.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(runtime)?;
    for (i, e) in result.episodes.iter().enumerate() {
        w.serialize(EvalRow {
            episode: i,
            layout_seed: e.layout_seed,
            outcome: format!("{:?}", e.outcome).to_lowercase(),
            steps: e.steps,
            total_return: e.total_return,
        })
        .map_err(runtime)?;
    }
    w.flush().map_err(runtime)?;
    Ok(EvalSummary {
        success_rate: result.success_rate,
        episodes: result.episodes.len(),
        csv_path,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaterfallReport {
    pub rows: Vec<WaterfallRow>,
    pub table: String,
    /// Largest |env + danger + affinity + format - total| over the rows.
    pub max_row_error: f64,
    /// `(sum of raw affinity gains, phi_end - phi_start)` when the episode allows the check.
    pub telescoping: Option<(f64, f64)>,
}

/// `waterfall <run_dir> <episode>`: per-step reward decomposition of one logged episode.
pub fn cmd_waterfall(run_dir: &Path, episode: u64, plot: Option<&Path>) -> Result<WaterfallReport, CliError> {
    let missing = |what: String| CliError::MissingEpisode(what);
    let path = run_dir.join(WATERFALL_FILE);
    let mut reader = csv::Reader::from_path(&path).map_err(|e| missing(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for r in reader.deserialize::<WaterfallRow>() {
        let r = r.map_err(runtime)?;
        if r.episode == episode {
            rows.push(r);
        }
    }
    if rows.is_empty() {
        return Err(missing(format!("episode {episode} not found in {}", path.display())));
    }

    let meta: Option<EpisodeRow> = csv::Reader::from_path(run_dir.join(EPISODES_FILE))
        .ok()
        .and_then(|mut r| r.deserialize::<EpisodeRow>().filter_map(Result::ok).find(|e| e.episode == episode));

    let mut table = String::new();
    writeln!(table, "{:>5} {:>12} {:>12} {:>12} {:>12} {:>12}", "step", "env", "danger", "affinity", "format", "total").unwrap();
    let mut sums = [0.0f64; 5];
    let mut max_row_error = 0.0f64;
    for r in &rows {
        writeln!(
            table,
            "{:>5} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
            r.step, r.env, r.danger, r.affinity, r.format, r.total
        )
        .unwrap();
        for (s, v) in sums.iter_mut().zip([r.env, r.danger, r.affinity, r.format, r.total]) {
            *s += v;
        }
        max_row_error = max_row_error.max((r.env + r.danger + r.affinity + r.format - r.total).abs());
    }
    writeln!(
        table,
        "{:>5} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
        "sum", sums[0], sums[1], sums[2], sums[3], sums[4]
    )
    .unwrap();
    writeln!(table, "row identity: max |env+danger+affinity+format-total| = {max_row_error:e}").unwrap();

    let telescoping = meta
        .as_ref()
        .filter(|m| m.lambda_affinity > 0.0 && !m.gamma_corrected)
        .map(|m| (sums[2] / m.lambda_affinity, m.phi_end - m.phi_start));
    match (&meta, telescoping) {
        (_, Some((lhs, rhs))) => writeln!(
            table,
            "telescoping: sum of affinity gains {lhs:.9} vs phi(p_T) - phi(p_0) {rhs:.9} (diff {:e})",
            (lhs - rhs).abs()
        )
        .unwrap(),
        (Some(_), None) => writeln!(table, "telescoping: not applicable (affinity weight zero or discount-corrected)").unwrap(),
        (None, None) => writeln!(table, "telescoping: no {EPISODES_FILE} entry for this episode").unwrap(),
    }
    if let Some(m) = &meta {
        writeln!(table, "outcome {} on layout {} (atlas {})", m.outcome, m.layout_seed, m.blend_hash).unwrap();
    }

    if let Some(p) = plot {
        save_png(p, &waterfall_plot(&rows)).map_err(runtime)?;
    }
    Ok(WaterfallReport {
        rows,
        table,
        max_row_error,
        telescoping,
    })
}

/// `render-atlas <checkpoint>`: writes the blended danger and affinity maps of every layout as PNG.
pub fn cmd_render_atlas(checkpoint: &Path, out: &Path, cell_px: Option<u32>) -> Result<Vec<PathBuf>, CliError> {
    let ckpt = load_checkpoint(checkpoint).map_err(|e| CliError::Checkpoint(e.to_string()))?;
    fs::create_dir_all(out).map_err(runtime)?;
    let mut written = Vec::new();
    for atlas in ckpt.registry.iter() {
        let blend = atlas.blend();
        for (ch, map) in [(Channel::Danger, &blend.danger), (Channel::Affinity, &blend.affinity)] {
            let path = out.join(heatmap_file_name(atlas.layout_seed, atlas.epoch, ch));
            save_png(&path, &render_heatmap(map, ch, cell_px.unwrap_or(DEFAULT_CELL_PX))).map_err(runtime)?;
            written.push(path);
        }
    }
    Ok(written)
}
