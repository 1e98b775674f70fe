use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{train, RunRecord, TrainConfig};
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{evaluate, EvalOptions, MetricsReport};
use crate::model::ModelConfig;
use crate::scene::Dataset;

/// Mean and population standard deviation of one metric across seeds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
    /// Seeds that produced a value.
    pub count: usize,
}

impl MetricSummary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt(), count: values.len() })
    }
}

/// One seed of a sweep. Failed seeds keep their error message and are
/// flagged degenerate, as are runs whose attention centers do not move.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub degenerate: bool,
    pub error: Option<String>,
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
    pub wall_clock_seconds: f64,
    pub report: Option<MetricsReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub outcomes: Vec<SeedOutcome>,
    /// Aggregate with `per_seed`, `mean` and `std` filled in; headline
    /// fields hold the means.
    pub aggregate: MetricsReport,
}

impl SeedReport {
    pub fn best_by(&self, metric: &str) -> Option<&SeedOutcome> {
        let value = |o: &SeedOutcome| o.report.as_ref().and_then(|r| r.scalars().get(metric).copied().flatten());
        self.outcomes
            .iter()
            .filter(|o| value(o).is_some())
            .max_by(|a, b| value(a).partial_cmp(&value(b)).expect("finite metrics"))
    }
}

/// Window for the initial and final loss means.
pub const LOSS_WINDOW: usize = 100;

fn run_seed(
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    data: &Dataset,
    seed: u64,
    eval: &EvalOptions,
    out: Option<&Path>,
) -> SeedOutcome {
    let cfg = TrainConfig { seed, ..cfg.clone() };
    let dir = out.map(|o| o.join(format!("seed_{seed}")));
    let attempt = || -> Result<(RunRecord, MetricsReport)> {
        let (model, mut record) = train(&cfg, model_cfg, data, dir.as_deref(), |_, _| {})?;
        let evaluation = evaluate(&model, data, eval)?;
        record.metrics = Some(
            evaluation.report.scalars().into_iter().filter_map(|(k, v)| v.map(|v| (k, v))).collect(),
        );
        if let Some(d) = &dir {
            io::write_json(&d.join("metrics.json"), &evaluation.report)?;
            io::write_json(&d.join("run.json"), &record)?;
        }
        Ok((record, evaluation.report))
    };
    match attempt() {
        Ok((record, report)) => SeedOutcome {
            seed,
            degenerate: report.attention.as_ref().is_some_and(|a| a.degenerate),
            error: None,
            initial_loss: record.initial_loss(LOSS_WINDOW),
            final_loss: record.final_loss(LOSS_WINDOW),
            wall_clock_seconds: record.wall_clock_seconds,
            report: Some(report),
        },
        Err(e) => SeedOutcome {
            seed,
            degenerate: true,
            error: Some(e.to_string()),
            initial_loss: None,
            final_loss: None,
            wall_clock_seconds: 0.0,
            report: None,
        },
    }
}

/// Trains and evaluates one model per seed, then aggregates every scalar
/// metric with its mean and population std. Seeds run on up to `threads`
/// threads; failures are recorded per seed rather than aborting the sweep.
/// With `out`, each seed writes to `out/seed_S` and the sweep to
/// `out/sweep.json`.
pub fn multi_seed(
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    data: &Dataset,
    seeds: &[u64],
    eval: &EvalOptions,
    out: Option<&Path>,
    threads: usize,
) -> Result<SeedReport> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("a sweep needs at least one seed".into()));
    }
    let eval = EvalOptions { centers: true, ..eval.clone() };
    let mut outcomes: Vec<Option<SeedOutcome>> = vec![None; seeds.len()];
    let threads = threads.clamp(1, seeds.len());
    std::thread::scope(|s| {
        let chunk = seeds.len().div_ceil(threads);
        for (slots, ids) in outcomes.chunks_mut(chunk).zip(seeds.chunks(chunk)) {
            let eval = &eval;
            s.spawn(move || {
                for (slot, &seed) in slots.iter_mut().zip(ids) {
                    *slot = Some(run_seed(cfg, model_cfg, data, seed, eval, out));
                }
            });
        }
    });
    let outcomes: Vec<SeedOutcome> = outcomes.into_iter().map(|o| o.expect("every seed ran")).collect();
    let aggregate = aggregate(&outcomes, model_cfg, data.len());
    let report = SeedReport { outcomes, aggregate };
    if let Some(o) = out {
        io::write_json(&o.join("sweep.json"), &report)?;
    }
    Ok(report)
}

fn aggregate(outcomes: &[SeedOutcome], model_cfg: &ModelConfig, scene_count: usize) -> MetricsReport {
    let mut per_seed: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    for (i, o) in outcomes.iter().enumerate() {
        if let Some(r) = &o.report {
            for (name, v) in r.scalars() {
                per_seed.entry(name).or_insert_with(|| vec![None; outcomes.len()])[i] = v;
            }
        }
    }
    let mut mean = BTreeMap::new();
    let mut std = BTreeMap::new();
    for (name, values) in &per_seed {
        let present: Vec<f64> = values.iter().flatten().copied().collect();
        let s = MetricSummary::of(&present);
        mean.insert(name.clone(), s.map(|s| s.mean));
        std.insert(name.clone(), s.map(|s| s.std));
    }
    let headline = |k: &str| mean.get(k).copied().flatten();
    MetricsReport {
        target: model_cfg.target_space,
        scene_count,
        fg_ari: headline("fg_ari"),
        miou: headline("miou"),
        mse_rgb: headline("mse_rgb"),
        dci: None,
        probes: None,
        robustness: None,
        attention: None,
        per_seed: Some(per_seed),
        mean: Some(mean),
        std: Some(std),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn population_std() {
        let s = MetricSummary::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_abs_diff_eq!(s.mean, 2.0);
        assert_abs_diff_eq!(s.std, (2.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        assert_eq!(MetricSummary::of(&[0.4]).unwrap().std, 0.0);
        assert_abs_diff_eq!(MetricSummary::of(&[0.7, 0.7, 0.7]).unwrap().std, 0.0, epsilon = 1e-12);
        assert!(MetricSummary::of(&[]).is_none());
    }
}
