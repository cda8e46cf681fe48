use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use atlas_cli::{cmd_eval, cmd_train, cmd_waterfall, CliError};

fn atlas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_atlas")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    let out = dir.join("out");
    fs::write(&path, format!("{body}\noutput_dir = {:?}\n", out.to_str().unwrap())).unwrap();
    path
}

const SMALL: &str = r#"
environment = "sokoban"
width = 6
height = 6
reward_preset = "sokoban"
epochs = 6
batch_size = 8
train_seeds = [1, 2]
eval_seeds = [40, 41]
eval_episodes = 6
heatmap_every = 3
checkpoint_every = 3
"#;

#[test]
fn minimal_config_writes_one_metrics_row_per_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = atlas(&["train", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = fs::read_to_string(dir.path().join("out/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 6);
    for f in ["summary.txt", "config.toml", "pool_log.csv", "waterfall.csv", "episodes.csv"] {
        assert!(dir.path().join("out").join(f).exists(), "{f} missing");
    }
}

#[test]
fn overlapping_seeds_exit_two_and_name_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("eval_seeds = [40, 41]", "eval_seeds = [40, 2]"));
    let out = atlas(&["train", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed 2"));
}

#[test]
fn bad_field_exits_two_with_field_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("batch_size = 8", "batch_size = -1"));
    let out = atlas(&["train", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("batch_size"));
}

#[test]
fn heatmap_snapshots_cover_both_channels_at_each_period() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL
        .replace("epochs = 6", "epochs = 200")
        .replace("batch_size = 8", "batch_size = 2")
        .replace("heatmap_every = 3", "heatmap_every = 50")
        .replace("checkpoint_every = 3", "checkpoint_every = 100")
        + "emit_waterfall = false\nassemble_prompts = false\n";
    let cfg = write_config(dir.path(), &body);
    cmd_train(&cfg, None, None).unwrap();
    let mut names: Vec<String> = fs::read_dir(dir.path().join("out/heatmaps"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names.len(), 2 * 2 * 5);
    for seed in [1, 2] {
        for epoch in [0, 50, 100, 150, 200] {
            for ch in ["danger", "affinity"] {
                let n = format!("atlas_{seed}_{epoch}_{ch}.png");
                assert!(names.contains(&n), "{n} missing");
            }
        }
    }
}

#[test]
fn train_is_reproducible_and_seed_override_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    cmd_train(&cfg, None, Some(&a)).unwrap();
    cmd_train(&cfg, None, Some(&b)).unwrap();
    cmd_train(&cfg, Some(99), Some(&c)).unwrap();
    for f in ["metrics.csv", "waterfall.csv", "pool_log.csv", "summary.txt", "heatmaps/atlas_1_6_danger.png"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    assert_ne!(fs::read(a.join("waterfall.csv")).unwrap(), fs::read(c.join("waterfall.csv")).unwrap());
}

#[test]
fn eval_guards_leakage_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    cmd_train(&cfg, None, None).unwrap();
    let ckpt = dir.path().join("out/checkpoints/run_0/epoch_6");
    assert!(ckpt.is_dir());

    let e1 = dir.path().join("e1");
    let e2 = dir.path().join("e2");
    let out = atlas(&["eval", cfg.to_str().unwrap(), ckpt.to_str().unwrap(), "--out", e1.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("success_rate"));
    let s = cmd_eval(&cfg, &ckpt, None, Some(&e2)).unwrap();
    assert!((0.0..=1.0).contains(&s.success_rate));
    assert_eq!(fs::read(e1.join("eval.csv")).unwrap(), fs::read(e2.join("eval.csv")).unwrap());

    // Evaluating on a layout the checkpoint trained on, with a config that does not list it as a train seed.
    let leaky = dir.path().join("leaky.toml");
    fs::write(&leaky, SMALL.replace("train_seeds = [1, 2]", "train_seeds = [7]").replace("eval_seeds = [40, 41]", "eval_seeds = [1]")).unwrap();
    let out = atlas(&["eval", leaky.to_str().unwrap(), ckpt.to_str().unwrap(), "--out", e1.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed 1"));

    let out = atlas(&["eval", cfg.to_str().unwrap(), dir.path().join("nowhere").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    fs::remove_file(ckpt.join("qtable.txt")).unwrap();
    assert!(matches!(cmd_eval(&cfg, &ckpt, None, Some(&e2)), Err(CliError::Checkpoint(_))));
}

#[test]
fn waterfall_rows_add_up_and_missing_episode_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    cmd_train(&cfg, None, None).unwrap();
    let run = dir.path().join("out");
    let episodes = fs::read_to_string(run.join("episodes.csv")).unwrap();
    let mut checked_success = false;
    for line in episodes.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let id: u64 = cols[0].parse().unwrap();
        let report = cmd_waterfall(&run, id, None).unwrap();
        assert!(report.max_row_error <= 1e-9);
        let last = report.rows.len() - 1;
        for (i, r) in report.rows.iter().enumerate() {
            if i != last && r.format == 0.0 {
                assert_eq!(r.env, 0.0, "non-terminal env reward in episode {id}");
            }
        }
        let (lhs, rhs) = report.telescoping.expect("sokoban preset has affinity shaping");
        assert!((lhs - rhs).abs() <= 1e-9);
        checked_success |= cols[3] == "success";
    }
    assert!(checked_success, "no successful episode to check");

    let plot = dir.path().join("w.png");
    let out = atlas(&["waterfall", run.to_str().unwrap(), "0", "--plot", plot.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("telescoping"));
    assert!(fs::metadata(&plot).unwrap().len() > 0);

    let out = atlas(&["waterfall", run.to_str().unwrap(), "999999"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn render_atlas_writes_a_pair_per_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    cmd_train(&cfg, None, None).unwrap();
    let ckpt = dir.path().join("out/checkpoints/run_0/epoch_3");
    let png_dir = dir.path().join("png");
    let out = atlas(&["render-atlas", ckpt.to_str().unwrap(), "--out", png_dir.to_str().unwrap(), "--cell-px", "8"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_dir(&png_dir).unwrap().count(), 4);
    assert!(png_dir.join("atlas_2_3_affinity.png").exists());
}
