//! Command-line driver: `gen`, `train`, `eval`, `corr` and `sweep`.
//!
//! Exit codes: 0 success, 2 invalid usage or configuration, 3 I/O or
//! malformed files, 4 non-finite loss, 5 checkpoint/dataset mismatch.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ocrl_core::color::{channel_correlation, Channel, ColorSpace, Image};
use ocrl_core::metrics::{evaluate, write_centers_csv, EvalOptions};
use ocrl_core::model::{ModelConfig, SlotModel};
use ocrl_core::scene::{generate_dataset, Dataset, DatasetConfig};
use ocrl_core::train::{train, TrainConfig};
use serde::de::DeserializeOwned;
use serde::Deserialize;

mod sweep;

pub use sweep::{run_sweep, EvalFlags, SweepCell, SweepConfig, SweepReport};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Config { path: PathBuf, source: ocrl_core::Error },
    #[error(transparent)]
    Core(#[from] ocrl_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use ocrl_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 2,
            CliError::Core(e) => match e {
                E::InvalidConfig(_)
                | E::UnknownColorSpace(_)
                | E::InvalidArgument(_)
                | E::Placement { .. }
                | E::WrongColorSpace { .. } => 2,
                E::Io { .. } | E::Json { .. } | E::TensorFormat { .. } | E::Shape(_) => 3,
                E::NonFiniteLoss { .. } | E::NonFiniteGradient { .. } => 4,
                E::ConfigMismatch(_) => 5,
            },
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Parser)]
#[command(name = "ocrl", version, about = "Slot-based object discovery with color-space reconstruction targets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene dataset.
    Gen(GenArgs),
    /// Train one model on a dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint and write a metrics report.
    Eval(EvalArgs),
    /// Pixel-wise channel correlation of a dataset.
    Corr(CorrArgs),
    /// Train and evaluate every target × slot count × seed of a sweep config.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Dataset config JSON.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// rgb, hsv, lab, gray, r, rgb-s, rgb-sv or rgb-hsv.
    #[arg(long)]
    pub target: ColorSpace,
    #[arg(long, default_value_t = 5000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional JSON with training overrides and a model config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub robustness: bool,
    #[arg(long)]
    pub dci: bool,
    #[arg(long)]
    pub probes: bool,
    /// Per-scene attention centers as CSV.
    #[arg(long)]
    pub attn_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CorrArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "r,g,b,h,s,v")]
    pub channels: Vec<Channel>,
    #[arg(long)]
    pub out: PathBuf,
    /// Pixels sampled from the corpus; all of them when the corpus is smaller.
    #[arg(long, default_value_t = 1_000_000)]
    pub budget: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
}

/// Optional settings for `train`; command-line flags take precedence.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOverrides {
    pub batch_size: Option<usize>,
    pub peak_lr: Option<f64>,
    pub warmup_steps: Option<usize>,
    pub decay_steps: Option<usize>,
    pub checkpoint_every: Option<usize>,
    pub grad_clip: Option<f64>,
    pub model: Option<ModelConfig>,
}

/// Worker threads, capped by `OCRL_THREADS` when set.
pub fn threads() -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var("OCRL_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(cap) if cap > 0 => cap.min(available),
        _ => available,
    }
}

pub(crate) fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    ocrl_core::io::read_json(path).map_err(|source| CliError::Config { path: path.to_path_buf(), source })
}

/// Desk model sized for `data`: `K` = most objects per scene + 1.
pub fn default_model(data: &Dataset, target: ColorSpace) -> Result<ModelConfig> {
    let gen = &data.manifest.generator;
    let mut model = ModelConfig::desk(target, gen.object_count_range[1]);
    let size = data.image_size();
    if !size.is_multiple_of(4) {
        return Err(CliError::Usage(format!("image size {size} is not a multiple of 4; pass a model config")));
    }
    model.image_size = size;
    model.broadcast_grid = [size / 4, size / 4];
    Ok(model)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => gen(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Eval(a) => eval_cmd(&a),
        Command::Corr(a) => corr(&a),
        Command::Sweep(a) => {
            let cfg: SweepConfig = read_config(&a.config)?;
            let report = run_sweep(&cfg, threads())?;
            for cell in &report.cells {
                println!("{}", cell.summary_line());
            }
            Ok(())
        }
    }
}

fn gen(a: &GenArgs) -> Result<()> {
    let mut cfg: DatasetConfig = read_config(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.master_seed = seed;
    }
    let manifest = generate_dataset(&cfg, &a.out, threads())?;
    println!("wrote {} scenes to {}", manifest.scenes.len(), a.out.display());
    Ok(())
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let data = Dataset::open(&a.data)?;
    let o: RunOverrides = match &a.config {
        Some(p) => read_config(p)?,
        None => RunOverrides::default(),
    };
    let mut model = match o.model {
        Some(m) => m,
        None => default_model(&data, a.target)?,
    };
    model.target_space = a.target;
    let mut cfg = TrainConfig::desk(&a.data, a.target, a.steps, a.seed);
    if let Some(w) = o.warmup_steps {
        cfg.warmup_steps = w;
        cfg.decay_steps = a.steps.saturating_sub(w);
    }
    if let Some(d) = o.decay_steps {
        cfg.decay_steps = d;
    }
    cfg.grad_clip = o.grad_clip;
    cfg.batch_size = a.batch_size.or(o.batch_size).unwrap_or(cfg.batch_size);
    cfg.peak_lr = a.lr.or(o.peak_lr).unwrap_or(cfg.peak_lr);
    cfg.checkpoint_every = a.checkpoint_every.or(o.checkpoint_every).unwrap_or(cfg.checkpoint_every);

    let every = (a.steps / 20).max(1);
    let (_, record) = train(&cfg, &model, &data, Some(&a.out), |step, loss| {
        if (step + 1) % every == 0 {
            eprintln!("step {}/{} loss {loss:.5}", step + 1, a.steps);
        }
    })?;
    println!(
        "trained {} steps in {:.1}s; run record at {}",
        record.loss.len(),
        record.wall_clock_seconds,
        a.out.join("run.json").display()
    );
    Ok(())
}

fn eval_cmd(a: &EvalArgs) -> Result<()> {
    let model = SlotModel::<f32>::load(&a.ckpt)?;
    let data = Dataset::open(&a.data)?;
    let opts = EvalOptions {
        seed: a.seed,
        dci: a.dci,
        probes: a.probes,
        robustness: a.robustness,
        centers: a.attn_csv.is_some(),
        ..EvalOptions::default()
    };
    let evaluation = evaluate(&model, &data, &opts)?;
    ocrl_core::io::write_json(&a.report, &evaluation.report)?;
    if let Some(path) = &a.attn_csv {
        write_centers_csv(path, &evaluation.centers)?;
    }
    let r = &evaluation.report;
    let show = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!("fg_ari {} miou {} mse_rgb {}", show(r.fg_ari), show(r.miou), show(r.mse_rgb));
    Ok(())
}

fn corr(a: &CorrArgs) -> Result<()> {
    let data = Dataset::open(&a.data)?;
    let corpus: Vec<Image<f32>> =
        data.scenes.iter().flat_map(|s| s.images.iter().map(|(_, img)| img.clone())).collect();
    let m = channel_correlation(&corpus, &a.channels, a.budget, a.seed)?;
    let mut out = Vec::new();
    m.write_csv(&mut out).map_err(|e| ocrl_core::Error::Io { path: a.out.clone(), source: e })?;
    ocrl_core::io::write_bytes(&a.out, &out)?;
    println!("{} pixels, {} channels -> {}", m.sample_count, m.size(), a.out.display());
    Ok(())
}
