use atlas_core::agent::{load_checkpoint, EnvConfig, NoopObserver, TabularAgent, TrainConfig, TrainingRun};
use atlas_core::gridworld::Outcome;

fn mean_success(metrics: &[atlas_core::agent::EpochMetrics]) -> f64 {
    metrics.iter().map(|m| m.success_rate).sum::<f64>() / metrics.len() as f64
}

#[test]
fn shaped_agent_improves_on_small_sokoban() {
    let mut cfg = TrainConfig::new(EnvConfig::sokoban(5, 5, 1), vec![3, 4], 9);
    cfg.epochs = 80;
    cfg.batch_size = 32;
    cfg.assemble_prompts = false;
    let mut run = TrainingRun::new(cfg, TabularAgent::new(Default::default())).unwrap();
    let metrics = run.train(80, &mut NoopObserver).unwrap().to_vec();
    let (first, last) = (mean_success(&metrics[..20]), mean_success(&metrics[60..]));
    assert!(last > first, "first 20 epochs {first}, last 20 epochs {last}");
}

#[test]
fn atlas_epoch_tracks_training_epoch() {
    let mut cfg = TrainConfig::new(EnvConfig::frozenlake(5, 5, 0.2), vec![1, 2, 3], 4);
    cfg.epochs = 7;
    cfg.batch_size = 6;
    let mut run = TrainingRun::new(cfg, TabularAgent::new(Default::default())).unwrap();
    run.train(7, &mut NoopObserver).unwrap();
    assert_eq!(run.metrics().len(), 7);
    for atlas in run.registry().iter() {
        assert_eq!(atlas.epoch, 7);
    }
    assert!(run.pool().len() <= 6);
}

#[test]
fn restored_checkpoint_reproduces_memory_and_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = TrainConfig::new(EnvConfig::sokoban(6, 6, 1), vec![11, 12], 2);
    cfg.epochs = 5;
    cfg.batch_size = 8;
    cfg.checkpoint_every = Some(5);
    cfg.checkpoint_root = Some(dir.path().to_path_buf());
    let mut run = TrainingRun::new(cfg.clone(), TabularAgent::new(Default::default())).unwrap();
    run.train(5, &mut NoopObserver).unwrap();

    let ckpt = load_checkpoint(&dir.path().join("run_2/epoch_5")).unwrap();
    assert_eq!(ckpt.epoch, 5);
    let agent = TabularAgent::load(ckpt.qtable.as_deref().unwrap(), cfg.agent).unwrap();
    let restored = TrainingRun::restore(cfg, agent, &ckpt).unwrap();
    assert_eq!(restored.memory_digest(), run.memory_digest());

    let a = run.evaluate(10, true, &[50, 51]).unwrap();
    let b = restored.evaluate(10, true, &[50, 51]).unwrap();
    assert_eq!(a, b);
    assert!(a.episodes.iter().all(|e| matches!(e.outcome, Outcome::Success | Outcome::Failure | Outcome::Timeout)));
}
