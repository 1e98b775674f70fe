use std::path::Path;

use approx::assert_abs_diff_eq;
use ocrl_core::color::ColorSpace;
use ocrl_core::metrics::{evaluate, EvalOptions};
use ocrl_core::model::{ConvSpec, ModelConfig, SlotModel};
use ocrl_core::scene::{generate_dataset, Dataset, DatasetConfig};
use ocrl_core::train::{lr_schedule, multi_seed, train, MetricSummary, RunRecord, TrainConfig};
use ocrl_core::Error;
use proptest::prelude::*;

fn dataset(dir: &Path, scenes: usize) -> Dataset {
    generate_dataset(&DatasetConfig::high_contrast(scenes, 32, 3), dir, 1).unwrap();
    Dataset::open(dir).unwrap()
}

/// Small enough for a few thousand steps inside a test.
fn tiny(target: ColorSpace) -> ModelConfig {
    ModelConfig {
        encoder: vec![ConvSpec::new(16, 3, 2), ConvSpec::new(16, 3, 2)],
        encoder_dim: 16,
        slot_dim: 16,
        mlp_hidden: 32,
        decoder: vec![ConvSpec::new(16, 3, 2), ConvSpec::new(16, 3, 2)],
        ..ModelConfig::desk(target, 3)
    }
}

fn config(dir: &Path, steps: usize) -> TrainConfig {
    TrainConfig { batch_size: 4, ..TrainConfig::desk(dir, ColorSpace::Rgb, steps, 3) }
}

#[test]
fn schedule_examples() {
    let cfg = TrainConfig { peak_lr: 1e-3, ..TrainConfig::desk("d", ColorSpace::Rgb, 1000, 0) };
    assert_eq!(lr_schedule(0, &cfg), 0.0);
    assert_eq!(lr_schedule(cfg.warmup_steps, &cfg), 1e-3);
    assert_abs_diff_eq!(lr_schedule(cfg.warmup_steps + cfg.decay_steps / 2, &cfg), 5e-4, epsilon = 1e-15);
    assert_abs_diff_eq!(lr_schedule(cfg.warmup_steps + cfg.decay_steps, &cfg), 0.0, epsilon = 1e-15);
    assert_eq!(lr_schedule(5000, &cfg), 0.0);
}

#[test]
fn config_validation() {
    let ok = TrainConfig::desk("d", ColorSpace::Rgb, 100, 0);
    ok.validate().unwrap();
    assert!(TrainConfig { warmup_steps: 101, ..ok.clone() }.validate().is_err());
    assert!(TrainConfig { peak_lr: 0.0, ..ok.clone() }.validate().is_err());
    assert!(TrainConfig { grad_clip: Some(-1.0), ..ok }.validate().is_err());
}

#[test]
fn zero_steps_keeps_only_the_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(&dir.path().join("data"), 2);
    let out = dir.path().join("run");
    let (_, record) = train(&config(&dir.path().join("data"), 0), &tiny(ColorSpace::Rgb), &data, Some(&out), |_, _| {}).unwrap();
    assert!(record.loss.is_empty());
    assert_eq!(record.checkpoints, vec!["checkpoints/step_000000".to_string()]);
    assert!(out.join("checkpoints/step_000000").is_dir());
}

#[test]
fn identical_seeds_give_identical_losses() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 4);
    let cfg = config(dir.path(), 12);
    let model = tiny(ColorSpace::Rgb);
    let (_, a) = train(&cfg, &model, &data, None, |_, _| {}).unwrap();
    let (_, b) = train(&cfg, &model, &data, None, |_, _| {}).unwrap();
    assert_eq!(a.loss.len(), 12);
    assert_eq!(a.loss.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.loss.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    let (_, c) = train(&TrainConfig { seed: 4, ..cfg }, &model, &data, None, |_, _| {}).unwrap();
    assert_ne!(a.loss, c.loss);
}

#[test]
fn mismatched_configs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 1);
    let cfg = config(dir.path(), 1);
    let err = train(&cfg, &tiny(ColorSpace::RgbS), &data, None, |_, _| {}).unwrap_err();
    assert!(matches!(err, Error::ConfigMismatch(_)));
    let wrong_size = ModelConfig { image_size: 64, broadcast_grid: [16, 16], ..tiny(ColorSpace::Rgb) };
    assert!(matches!(train(&cfg, &wrong_size, &data, None, |_, _| {}), Err(Error::ConfigMismatch(_))));
}

#[test]
fn non_finite_loss_reports_step_and_batch() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 2);
    let cfg = TrainConfig { peak_lr: 1e30, warmup_steps: 0, decay_steps: 50, ..config(dir.path(), 50) };
    match train(&cfg, &tiny(ColorSpace::Rgb), &data, None, |_, _| {}) {
        Err(Error::NonFiniteLoss { step, batch }) => {
            assert!(step > 0);
            assert_eq!(batch.len(), 4);
        }
        other => panic!("expected a non-finite loss, got {other:?}"),
    }
}

#[test]
fn run_record_and_checkpoints_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(&dir.path().join("data"), 4);
    let out = dir.path().join("run");
    let cfg = TrainConfig { checkpoint_every: 5, ..config(&dir.path().join("data"), 10) };
    let (model, record) = train(&cfg, &tiny(ColorSpace::Rgb), &data, Some(&out), |_, _| {}).unwrap();
    assert_eq!(record.checkpoints.len(), 3);
    let loaded = RunRecord::load(&out).unwrap();
    assert_eq!(loaded.loss, record.loss);
    assert_eq!(loaded.config, cfg);

    let restored = SlotModel::<f32>::load(&out.join(record.checkpoints.last().unwrap())).unwrap();
    let opts = EvalOptions::default();
    let a = evaluate(&model, &data, &opts).unwrap().report;
    let b = evaluate(&restored, &data, &opts).unwrap().report;
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn smoke_run_reduces_the_loss() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 8);
    let (_, record) = train(&config(dir.path(), 2000), &tiny(ColorSpace::Rgb), &data, None, |_, _| {}).unwrap();
    let (first, last) = (record.initial_loss(100).unwrap(), record.final_loss(100).unwrap());
    assert!(last < 0.25 * first, "final {last} vs initial {first}");
}

#[test]
fn metric_summary_examples() {
    let s = MetricSummary::of(&[1.0, 2.0, 3.0]).unwrap();
    assert_eq!(s.mean, 2.0);
    assert_abs_diff_eq!(s.std, 0.816_496_580_927_726, epsilon = 1e-12);
    assert_eq!(MetricSummary::of(&[0.4]).unwrap().std, 0.0);
    assert_eq!(MetricSummary::of(&[0.7; 4]).unwrap().std, 0.0);
    assert_eq!(MetricSummary::of(&[]), None);
}

#[test]
fn sweep_aggregates_seeds_and_records_failures() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(&dir.path().join("data"), 4);
    let out = dir.path().join("sweep");
    let cfg = config(&dir.path().join("data"), 4);
    let report =
        multi_seed(&cfg, &tiny(ColorSpace::Rgb), &data, &[1, 2], &EvalOptions::default(), Some(&out), 2).unwrap();
    assert_eq!(report.outcomes.len(), 2);
    assert!(out.join("sweep.json").is_file());
    assert!(out.join("seed_1/metrics.json").is_file() && out.join("seed_2/run.json").is_file());
    let aris: Vec<f64> = report.outcomes.iter().map(|o| o.report.as_ref().unwrap().fg_ari.unwrap()).collect();
    let mean = report.aggregate.mean.as_ref().unwrap()["fg_ari"].unwrap();
    let std = report.aggregate.std.as_ref().unwrap()["fg_ari"].unwrap();
    assert_abs_diff_eq!(mean, (aris[0] + aris[1]) / 2.0, epsilon = 1e-12);
    assert_abs_diff_eq!(std, (aris[0] - aris[1]).abs() / 2.0, epsilon = 1e-12);
    assert_eq!(report.aggregate.fg_ari, Some(mean));
    assert!(report.best_by("fg_ari").is_some());

    // A seed that cannot train is kept and flagged rather than aborting.
    let bad = TrainConfig { peak_lr: 1e30, warmup_steps: 0, decay_steps: 50, steps: 50, ..cfg };
    let report = multi_seed(&bad, &tiny(ColorSpace::Rgb), &data, &[1], &EvalOptions::default(), None, 1).unwrap();
    assert!(report.outcomes[0].degenerate);
    assert!(report.outcomes[0].error.is_some());
    assert!(multi_seed(&bad, &tiny(ColorSpace::Rgb), &data, &[], &EvalOptions::default(), None, 1).is_err());
}

proptest! {
    #[test]
    fn schedule_is_continuous_and_non_negative(steps in 1usize..5000, warm_frac in 0.0f64..1.0, peak in 1e-5f64..1e-2) {
        let warmup_steps = (steps as f64 * warm_frac) as usize;
        let cfg = TrainConfig { peak_lr: peak, warmup_steps, decay_steps: steps - warmup_steps, ..TrainConfig::desk("d", ColorSpace::Rgb, steps, 0) };
        let mut last = lr_schedule(0, &cfg);
        // Largest step-to-step change is a warmup increment or a cosine slope.
        let jump = peak * (1.0 / warmup_steps.max(1) as f64).max(std::f64::consts::PI / 2.0 / (cfg.decay_steps.max(1)) as f64) + 1e-15;
        for s in 1..steps + 10 {
            let lr = lr_schedule(s, &cfg);
            prop_assert!(lr >= 0.0 && lr <= peak);
            prop_assert!((lr - last).abs() <= jump, "step {} {} -> {}", s, last, lr);
            last = lr;
        }
    }
}
