use std::fmt::Write as _;
use std::path::PathBuf;

use ocrl_core::color::ColorSpace;
use ocrl_core::metrics::EvalOptions;
use ocrl_core::model::ModelConfig;
use ocrl_core::scene::Dataset;
use ocrl_core::train::{multi_seed, SeedReport, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::{default_model, CliError, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalFlags {
    #[serde(default)]
    pub dci: bool,
    #[serde(default)]
    pub probes: bool,
    #[serde(default)]
    pub robustness: bool,
}

/// A grid of runs: every target × slot count, each over all seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub data: PathBuf,
    pub out: PathBuf,
    pub targets: Vec<ColorSpace>,
    pub seeds: Vec<u64>,
    /// Slot counts to ablate; empty uses the model default.
    #[serde(default)]
    pub slot_counts: Vec<usize>,
    pub steps: usize,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub peak_lr: Option<f64>,
    /// Base model; `target_space` and `num_slots` are set per cell.
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub eval: EvalFlags,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub target: ColorSpace,
    pub num_slots: usize,
    pub directory: String,
    /// Set when the cell could not run at all; per-seed failures live in `result`.
    pub error: Option<String>,
    pub result: Option<SeedReport>,
}

impl SweepCell {
    pub fn degenerate_seeds(&self) -> usize {
        self.result.as_ref().map_or(0, |r| r.outcomes.iter().filter(|o| o.degenerate).count())
    }

    pub fn summary_line(&self) -> String {
        let mut line = format!("{} K={}", self.target, self.num_slots);
        match (&self.result, &self.error) {
            (Some(r), _) => {
                for key in ["fg_ari", "miou", "mse_rgb"] {
                    let mean = r.aggregate.mean.as_ref().and_then(|m| m.get(key).copied().flatten());
                    let std = r.aggregate.std.as_ref().and_then(|m| m.get(key).copied().flatten());
                    let _ = write!(line, " {key} {}", mean_std(mean, std));
                }
                if self.degenerate_seeds() > 0 {
                    let _ = write!(line, " ({} degenerate)", self.degenerate_seeds());
                }
            }
            (None, Some(e)) => {
                let _ = write!(line, " failed: {e}");
            }
            (None, None) => {}
        }
        line
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: SweepConfig,
    pub cells: Vec<SweepCell>,
}

fn mean_std(mean: Option<f64>, std: Option<f64>) -> String {
    match (mean, std) {
        (Some(m), Some(s)) => format!("{m:.4} ({s:.4})"),
        (Some(m), None) => format!("{m:.4}"),
        _ => String::new(),
    }
}

impl SweepReport {
    /// One row per cell, one `mean (std)` column per metric.
    pub fn to_csv(&self) -> String {
        let mut metrics: Vec<String> = Vec::new();
        for cell in &self.cells {
            if let Some(mean) = cell.result.as_ref().and_then(|r| r.aggregate.mean.as_ref()) {
                for k in mean.keys() {
                    if !metrics.contains(k) {
                        metrics.push(k.clone());
                    }
                }
            }
        }
        metrics.sort();
        let mut out = String::from("target,num_slots,seeds,degenerate");
        for m in &metrics {
            let _ = write!(out, ",{m}");
        }
        out.push('\n');
        for cell in &self.cells {
            let _ = write!(out, "{},{},{},{}", cell.target, cell.num_slots, self.config.seeds.len(), cell.degenerate_seeds());
            let agg = cell.result.as_ref().map(|r| &r.aggregate);
            for m in &metrics {
                let get = |map: Option<&std::collections::BTreeMap<String, Option<f64>>>| map.and_then(|x| x.get(m).copied().flatten());
                let text = mean_std(get(agg.and_then(|a| a.mean.as_ref())), get(agg.and_then(|a| a.std.as_ref())));
                let _ = write!(out, ",{text}");
            }
            out.push('\n');
        }
        out
    }
}

/// Runs every cell of `cfg`, writing `cell/seed_S/*` per run plus
/// `sweep.json` and `sweep.csv` under `cfg.out`.
pub fn run_sweep(cfg: &SweepConfig, threads: usize) -> Result<SweepReport> {
    if cfg.targets.is_empty() || cfg.seeds.is_empty() {
        return Err(CliError::Usage("a sweep needs at least one target and one seed".into()));
    }
    let data = Dataset::open(&cfg.data)?;
    let eval = EvalOptions {
        dci: cfg.eval.dci,
        probes: cfg.eval.probes,
        robustness: cfg.eval.robustness,
        ..EvalOptions::default()
    };
    let mut cells = Vec::new();
    for &target in &cfg.targets {
        let mut base = match &cfg.model {
            Some(m) => m.clone(),
            None => default_model(&data, target)?,
        };
        base.target_space = target;
        let counts = if cfg.slot_counts.is_empty() { vec![base.num_slots] } else { cfg.slot_counts.clone() };
        for k in counts {
            let model = ModelConfig { num_slots: k, ..base.clone() };
            let directory = format!("{}_k{k}", target.id().to_ascii_lowercase());
            let mut train_cfg = TrainConfig::desk(&cfg.data, target, cfg.steps, 0);
            train_cfg.batch_size = cfg.batch_size.unwrap_or(train_cfg.batch_size);
            train_cfg.peak_lr = cfg.peak_lr.unwrap_or(train_cfg.peak_lr);
            let outcome = multi_seed(&train_cfg, &model, &data, &cfg.seeds, &eval, Some(&cfg.out.join(&directory)), threads);
            let (result, error) = match outcome {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let cell = SweepCell { target, num_slots: k, directory, error, result };
            eprintln!("{}", cell.summary_line());
            cells.push(cell);
        }
    }
    let report = SweepReport { config: cfg.clone(), cells };
    ocrl_core::io::write_json(&cfg.out.join("sweep.json"), &report)?;
    ocrl_core::io::write_bytes(&cfg.out.join("sweep.csv"), report.to_csv().as_bytes())?;
    Ok(report)
}
