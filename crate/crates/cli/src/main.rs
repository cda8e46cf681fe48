use std::path::PathBuf;
use std::process::ExitCode;

use atlas_cli::{cmd_eval, cmd_render_atlas, cmd_train, cmd_waterfall, CliError};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "atlas", version, about = "Train, evaluate and inspect heatmap-shaped grid agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a TOML config and write metrics, heatmaps, logs and checkpoints.
    Train {
        config: PathBuf,
        /// Overrides `master_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the config's held-out seeds.
    Eval {
        config: PathBuf,
        checkpoint: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the per-step reward decomposition of a logged episode.
    Waterfall {
        run_dir: PathBuf,
        episode: u64,
        /// Also write a stacked bar chart PNG here.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Render a checkpoint's blended maps to PNG.
    RenderAtlas {
        checkpoint: PathBuf,
        #[arg(long, default_value = "atlas_png")]
        out: PathBuf,
        #[arg(long)]
        cell_px: Option<u32>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config, seed, out } => {
            let s = cmd_train(&config, seed, out.as_deref())?;
            println!(
                "trained {} epochs, final success {:.4}, artifacts in {}",
                s.epochs,
                s.final_success,
                s.output_dir.display()
            );
        }
        Command::Eval { config, checkpoint, seed, out } => {
            let s = cmd_eval(&config, &checkpoint, seed, out.as_deref())?;
            println!("success_rate {} over {} episodes ({})", s.success_rate, s.episodes, s.csv_path.display());
        }
        Command::Waterfall { run_dir, episode, plot } => {
            print!("{}", cmd_waterfall(&run_dir, episode, plot.as_deref())?.table);
        }
        Command::RenderAtlas { checkpoint, out, cell_px } => {
            for p in cmd_render_atlas(&checkpoint, &out, cell_px)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("atlas: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
