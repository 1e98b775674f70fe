//! Seeded training loop: warmup + cosine schedule, Adam, checkpoints.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamState, Graph, Tensor};
use crate::color::{compose_target, ColorSpace, Image};
use crate::error::{Error, Result};
use crate::io;
use crate::model::{slot_noise, ModelConfig, SlotModel};
use crate::scene::{derive_seed, Dataset};

mod multi;

pub use multi::{multi_seed, MetricSummary, SeedOutcome, SeedReport, LOSS_WINDOW};

const INIT_SALT: u64 = 0x696e_6974;
const SHUFFLE_SALT: u64 = 0x7368_7566;
const NOISE_SALT: u64 = 0x6e6f_6973;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub peak_lr: f64,
    pub warmup_steps: usize,
    pub decay_steps: usize,
    #[serde(default)]
    pub seed: u64,
    pub target: ColorSpace,
    /// Checkpoint period in steps; 0 keeps only the initial and final ones.
    #[serde(default)]
    pub checkpoint_every: usize,
    pub dataset: PathBuf,
    /// Optional clip on the global gradient norm.
    #[serde(default)]
    pub grad_clip: Option<f64>,
}

fn default_batch() -> usize {
    16
}
fn default_lr() -> f64 {
    4e-4
}

impl TrainConfig {
    /// Desk defaults: batch 16, 10% warmup, cosine decay over the rest.
    pub fn desk(dataset: impl Into<PathBuf>, target: ColorSpace, steps: usize, seed: u64) -> Self {
        let warmup_steps = steps / 10;
        Self {
            steps,
            batch_size: default_batch(),
            peak_lr: default_lr(),
            warmup_steps,
            decay_steps: steps - warmup_steps,
            seed,
            target,
            checkpoint_every: 0,
            dataset: dataset.into(),
            grad_clip: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if self.warmup_steps > self.steps {
            return fail(format!("warmup_steps {} exceeds steps {}", self.warmup_steps, self.steps));
        }
        if !(self.peak_lr.is_finite() && self.peak_lr > 0.0) {
            return fail(format!("peak_lr must be positive, got {}", self.peak_lr));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if let Some(c) = self.grad_clip {
            if !(c.is_finite() && c > 0.0) {
                return fail(format!("grad_clip must be positive, got {c}"));
            }
        }
        Ok(())
    }
}

/// Linear warmup from 0 to `peak_lr`, then a half cosine to 0 over
/// `decay_steps`, and 0 afterwards.
pub fn lr_schedule(step: usize, cfg: &TrainConfig) -> f64 {
    let peak = cfg.peak_lr;
    if step < cfg.warmup_steps {
        return peak * step as f64 / cfg.warmup_steps as f64;
    }
    let t = step - cfg.warmup_steps;
    if t > cfg.decay_steps {
        return 0.0;
    }
    if cfg.decay_steps == 0 {
        return peak;
    }
    let phase = std::f64::consts::PI * t as f64 / cfg.decay_steps as f64;
    (peak * 0.5 * (1.0 + phase.cos())).max(0.0)
}

/// Outcome of one training run. The loss series lives in `loss.oct` next to
/// `run.json` when the run is written to disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: TrainConfig,
    pub model: ModelConfig,
    #[serde(skip)]
    pub loss: Vec<f32>,
    pub loss_file: Option<String>,
    pub checkpoints: Vec<String>,
    /// Filled by evaluation when the run is part of a sweep.
    pub metrics: Option<BTreeMap<String, f64>>,
    pub wall_clock_seconds: f64,
}

impl RunRecord {
    /// Mean loss over the first `window` steps.
    pub fn initial_loss(&self, window: usize) -> Option<f64> {
        mean_f32(&self.loss[..window.min(self.loss.len())])
    }

    /// Mean loss over the last `window` steps.
    pub fn final_loss(&self, window: usize) -> Option<f64> {
        mean_f32(&self.loss[self.loss.len().saturating_sub(window)..])
    }

    /// Reads `run.json` and its loss file.
    pub fn load(dir: &Path) -> Result<Self> {
        let mut record: RunRecord = io::read_json(&dir.join("run.json"))?;
        if let Some(file) = &record.loss_file {
            record.loss = io::read_tensor(&dir.join(file))?.into_data();
        }
        Ok(record)
    }
}

fn mean_f32(v: &[f32]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64)
}

/// Stacks per-scene `[H,W,C]` tensors into `[B,H,W,C]`.
fn stack(items: &[&Tensor<f32>]) -> Result<Tensor<f32>> {
    let inner = items[0].shape().to_vec();
    let mut shape = vec![items.len()];
    shape.extend_from_slice(&inner);
    let mut data = Vec::with_capacity(items.len() * items[0].len());
    for t in items {
        data.extend_from_slice(t.data());
    }
    Tensor::new(&shape, data)
}

/// Model input for an RGB image under `model`'s input space.
pub fn model_input(model: &ModelConfig, img: &Image<f32>) -> Result<Tensor<f32>> {
    Ok(compose_target(img, model.input_space)?.to_tensor())
}

/// Checks that a model can be trained on or evaluated against `data`.
pub fn check_compatible(model: &ModelConfig, data: &Dataset) -> Result<()> {
    if model.image_size != data.image_size() {
        return Err(Error::ConfigMismatch(format!(
            "image_size: model {} vs dataset {}",
            model.image_size,
            data.image_size()
        )));
    }
    Ok(())
}

/// Trains a fresh model. With `out`, writes checkpoints under
/// `out/checkpoints/step_NNNNNN`, then `loss.oct` and `run.json`.
/// `progress` receives `(step, loss)` after every step.
pub fn train(
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    data: &Dataset,
    out: Option<&Path>,
    mut progress: impl FnMut(usize, f32),
) -> Result<(SlotModel<f32>, RunRecord)> {
    cfg.validate()?;
    if model_cfg.target_space != cfg.target {
        return Err(Error::ConfigMismatch(format!(
            "target: model {} vs training {}",
            model_cfg.target_space, cfg.target
        )));
    }
    check_compatible(model_cfg, data)?;
    if data.is_empty() && cfg.steps > 0 {
        return Err(Error::InvalidConfig("cannot train on an empty dataset".into()));
    }
    let started = Instant::now();

    let inputs: Vec<Tensor<f32>> =
        data.scenes.iter().map(|s| model_input(model_cfg, s.primary_image())).collect::<Result<_>>()?;
    let targets: Vec<Tensor<f32>> = data
        .scenes
        .iter()
        .map(|s| Ok(compose_target(s.primary_image(), cfg.target)?.to_tensor()))
        .collect::<Result<_>>()?;

    let mut model = SlotModel::<f32>::new(model_cfg.clone(), derive_seed(cfg.seed, INIT_SALT))?;
    let mut adam = AdamState::new(model.params());
    let mut shuffle = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SHUFFLE_SALT));
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;

    let mut checkpoints = Vec::new();
    let save = |model: &SlotModel<f32>, step: usize, list: &mut Vec<String>| -> Result<()> {
        if let Some(dir) = out {
            let rel = format!("checkpoints/step_{step:06}");
            model.save(&dir.join(&rel))?;
            list.push(rel);
        }
        Ok(())
    };
    save(&model, 0, &mut checkpoints)?;

    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size {
            if cursor == order.len() {
                order = (0..data.len()).collect();
                order.shuffle(&mut shuffle);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        let x = stack(&batch.iter().map(|&i| &inputs[i]).collect::<Vec<_>>())?;
        let y = stack(&batch.iter().map(|&i| &targets[i]).collect::<Vec<_>>())?;

        let mut g = Graph::new();
        let bound = model.params().bind(&mut g);
        let xv = g.constant(x);
        let yv = g.constant(y);
        let noise = g.constant(slot_noise(model_cfg, batch.len(), derive_seed(cfg.seed ^ NOISE_SALT, step as u64)));
        let pass = model.forward(&mut g, &bound, xv, noise)?;
        let loss_var = model.loss(&mut g, pass.combined, yv)?;
        let loss = g.value(loss_var).item();
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step, batch });
        }
        g.backward(loss_var)?;
        let mut grads = model.params().gradients(&g, &bound);
        drop(g);
        if let Some(clip) = cfg.grad_clip {
            clip_global_norm(&mut grads, clip);
        }
        adam.update(model.params_mut(), &grads, lr_schedule(step, cfg) as f32)?;
        losses.push(loss);
        progress(step, loss);

        let done = step + 1;
        if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done != cfg.steps {
            save(&model, done, &mut checkpoints)?;
        }
    }
    if cfg.steps > 0 {
        save(&model, cfg.steps, &mut checkpoints)?;
    }

    let mut record = RunRecord {
        config: cfg.clone(),
        model: model_cfg.clone(),
        loss: losses,
        loss_file: None,
        checkpoints,
        metrics: None,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    if let Some(dir) = out {
        let series = Tensor::new(&[record.loss.len()], record.loss.clone())?;
        io::write_tensor(&dir.join("loss.oct"), &series)?;
        record.loss_file = Some("loss.oct".into());
        io::write_json(&dir.join("run.json"), &record)?;
    }
    Ok((model, record))
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
fn clip_global_norm(grads: &mut [Tensor<f32>], max_norm: f64) {
    let norm = grads.iter().flat_map(|g| g.data()).map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = (max_norm / norm) as f32;
        for g in grads {
            for v in g.data_mut() {
                *v *= s;
            }
        }
    }
}
