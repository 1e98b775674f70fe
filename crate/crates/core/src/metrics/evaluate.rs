use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::centers::{attention_center, default_center_floor, summarize_centers, CenterRecord, CenterSummary};
use super::dci::dci;
use super::mse::{mse_rgb, MSE_SCALE_255};
use super::probe::{probe, split_indices, ProbeKind, ProbeScore, Samples};
use super::robustness::{cosine_distance, euclidean_distance, LightingCondition, RobustnessReport, Stat};
use super::segmentation::{fg_ari, match_slots, miou, SegmentationPrediction};
use crate::autodiff::{Graph, Tensor};
use crate::color::{ColorSpace, Image};
use crate::error::{Error, Result};
use crate::model::{slot_noise, SlotModel};
use crate::scene::{derive_seed, Dataset, FactorRecord, LoadedScene};
use crate::train::{check_compatible, model_input};

/// Number of equal-width hue bins used as the color factor.
pub const HUE_BINS: usize = 6;
const TEST_FRACTION: f64 = 0.25;

/// Discrete factors scored by probes and DCI, with their class counts.
pub fn factor_names() -> [&'static str; 4] {
    ["shape", "size", "texture", "hue"]
}

pub fn factor_classes(texture_count: usize) -> [usize; 4] {
    [3, 3, texture_count, HUE_BINS]
}

pub fn factor_labels(f: &FactorRecord) -> [usize; 4] {
    let hue = ((f.material_hue * HUE_BINS as f64) as usize).min(HUE_BINS - 1);
    [f.shape.index(), f.size.index(), f.texture_id, hue]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Seeds slot initialization, splits, probes and trees.
    pub seed: u64,
    pub mse_scale: f64,
    pub dci: bool,
    pub probes: bool,
    pub robustness: bool,
    pub centers: bool,
    /// Degeneration floor for center variance; defaults to 5% of the image side, squared.
    pub center_floor: Option<f64>,
    pub batch_size: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            mse_scale: MSE_SCALE_255,
            dci: false,
            probes: false,
            robustness: false,
            centers: false,
            center_floor: None,
            batch_size: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DciSummary {
    pub d: Option<f64>,
    pub c: Option<f64>,
    pub i: f64,
}

/// Evaluation output, serialized as the metrics report JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub target: ColorSpace,
    pub scene_count: usize,
    pub fg_ari: Option<f64>,
    pub miou: Option<f64>,
    pub mse_rgb: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dci: Option<DciSummary>,
    /// `probe kind → factor → score`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<BTreeMap<String, BTreeMap<String, ProbeScore>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robustness: Option<RobustnessReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention: Option<CenterSummary>,
    /// Aggregates across seeds, present in sweep reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_seed: Option<BTreeMap<String, Vec<Option<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<BTreeMap<String, Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<BTreeMap<String, Option<f64>>>,
}

impl MetricsReport {
    /// Headline scalars by name, as aggregated across seeds.
    pub fn scalars(&self) -> BTreeMap<String, Option<f64>> {
        let mut out = BTreeMap::new();
        out.insert("fg_ari".to_string(), self.fg_ari);
        out.insert("miou".to_string(), self.miou);
        out.insert("mse_rgb".to_string(), self.mse_rgb);
        if let Some(d) = &self.dci {
            out.insert("dci_d".to_string(), d.d);
            out.insert("dci_c".to_string(), d.c);
            out.insert("dci_i".to_string(), Some(d.i));
        }
        if let Some(p) = &self.probes {
            for (kind, factors) in p {
                for (factor, score) in factors {
                    out.insert(format!("probe_{kind}_{factor}"), score.average_precision);
                }
            }
        }
        if let Some(a) = &self.attention {
            out.insert("center_variance".to_string(), Some(a.mean_variance));
        }
        out
    }
}

/// Model outputs for one image.
#[derive(Clone, Debug)]
pub struct SceneOutput {
    pub prediction: SegmentationPrediction,
    /// Combined reconstruction in the target space.
    pub reconstruction: Image<f32>,
}

/// Runs the model on `images` with one slot-noise seed per image, in
/// batches of `batch_size`. Results do not depend on the batch size.
pub fn infer(model: &SlotModel<f32>, images: &[&Image<f32>], seeds: &[u64], batch_size: usize) -> Result<Vec<SceneOutput>> {
    if images.len() != seeds.len() {
        return Err(Error::Shape(format!("{} images for {} seeds", images.len(), seeds.len())));
    }
    let cfg = model.config();
    let (k, d, n) = (cfg.num_slots, cfg.slot_dim, cfg.image_size);
    let c = cfg.color_channels();
    let mut out = Vec::with_capacity(images.len());
    for (chunk, chunk_seeds) in images.chunks(batch_size.max(1)).zip(seeds.chunks(batch_size.max(1))) {
        let b = chunk.len();
        let mut x = Vec::with_capacity(b * n * n * cfg.input_space.channel_count());
        let mut noise = Vec::with_capacity(b * k * d);
        for (img, &seed) in chunk.iter().zip(chunk_seeds) {
            x.extend_from_slice(model_input(cfg, img)?.data());
            noise.extend_from_slice(slot_noise::<f32>(cfg, 1, seed).data());
        }
        let mut g = Graph::new();
        let bound = model.params().bind(&mut g);
        let xv = g.constant(Tensor::new(&[b, n, n, cfg.input_space.channel_count()], x)?);
        let nv = g.constant(Tensor::new(&[b, k, d], noise)?);
        let pass = model.forward(&mut g, &bound, xv, nv)?;
        let (alpha, slots, combined) = (g.value(pass.alpha).data(), g.value(pass.slots).data(), g.value(pass.combined).data());
        for i in 0..b {
            let a = alpha[i * k * n * n..(i + 1) * k * n * n].to_vec();
            let s = slots[i * k * d..(i + 1) * k * d].to_vec();
            let prediction = SegmentationPrediction::from_alpha(a, s, k, n, n)?;
            let rec = combined[i * n * n * c..(i + 1) * n * n * c].to_vec();
            out.push(SceneOutput { prediction, reconstruction: Image::new(n, n, cfg.target_space, rec)? });
        }
    }
    Ok(out)
}

fn labels_of(scene: &LoadedScene) -> Vec<usize> {
    scene.labels.iter().map(|&l| l as usize).collect()
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Scene-averaged FG-ARI and mIoU of a set of outputs.
fn segmentation_scores(data: &Dataset, outputs: &[SceneOutput]) -> Result<(Option<f64>, Option<f64>)> {
    let mut aris = Vec::new();
    let mut ious = Vec::new();
    for (scene, o) in data.scenes.iter().zip(outputs) {
        let gt = labels_of(scene);
        let p = &o.prediction;
        if let Some(a) = fg_ari(&p.pixel_labels, &gt)? {
            aris.push(a);
        }
        ious.push(miou(&p.pixel_labels, p.num_slots, &gt, scene.object_count() + 1)?);
    }
    Ok((mean_of(aris.into_iter()), mean_of(ious.into_iter())))
}

/// Result of [`evaluate`]: the report plus per-scene attention centers.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub centers: Vec<CenterRecord>,
}

/// Full evaluation of `model` on `data`. Object discovery and RGB error are
/// always computed on each scene's first image variant; the options enable
/// the remaining metric groups.
pub fn evaluate(model: &SlotModel<f32>, data: &Dataset, opts: &EvalOptions) -> Result<Evaluation> {
    check_compatible(model.config(), data)?;
    let cfg = model.config();
    let seeds: Vec<u64> = (0..data.len()).map(|i| derive_seed(opts.seed, i as u64)).collect();
    let primary: Vec<&Image<f32>> = data.scenes.iter().map(|s| s.primary_image()).collect();
    let outputs = infer(model, &primary, &seeds, opts.batch_size)?;
    let (fg, mi) = segmentation_scores(data, &outputs)?;
    let mse = mean_of(
        data.scenes
            .iter()
            .zip(&outputs)
            .map(|(s, o)| mse_rgb(&o.reconstruction, s.primary_image(), opts.mse_scale))
            .collect::<Result<Vec<_>>>()?
            .into_iter(),
    );

    let mut report = MetricsReport {
        target: cfg.target_space,
        scene_count: data.len(),
        fg_ari: fg,
        miou: mi,
        mse_rgb: mse,
        dci: None,
        probes: None,
        robustness: None,
        attention: None,
        per_seed: None,
        mean: None,
        std: None,
    };

    if opts.dci || opts.probes {
        let (samples, labels) = matched_samples(data, &outputs)?;
        let classes = factor_classes(data.manifest.generator.texture_count);
        let (train, test) = split_indices(samples.len(), TEST_FRACTION, opts.seed);
        if opts.probes {
            let mut kinds = BTreeMap::new();
            for (kind, name) in [(ProbeKind::Linear, "linear"), (ProbeKind::Nonlinear, "nonlinear")] {
                let mut scores = BTreeMap::new();
                for (j, factor) in factor_names().iter().enumerate() {
                    let s = probe(&samples, &labels[j], classes[j], &train, &test, kind, opts.seed)?;
                    scores.insert(factor.to_string(), s);
                }
                kinds.insert(name.to_string(), scores);
            }
            report.probes = Some(kinds);
        }
        if opts.dci {
            if train.is_empty() || test.is_empty() {
                return Err(Error::InvalidArgument("too few matched objects for DCI".into()));
            }
            let r = dci(&samples, &labels, &classes, &train, &test, opts.seed)?;
            report.dci = Some(DciSummary { d: r.disentanglement, c: r.completeness, i: r.informativeness });
        }
    }

    let mut centers = Vec::new();
    if opts.centers {
        let n = cfg.image_size;
        for (scene, o) in data.scenes.iter().zip(&outputs) {
            for k in 0..cfg.num_slots {
                let (cx, cy) = attention_center(&o.prediction.alpha[k * n * n..(k + 1) * n * n], n, n);
                centers.push(CenterRecord { scene_id: scene.scene_id.clone(), slot: k, cx, cy });
            }
        }
        let floor = opts.center_floor.unwrap_or_else(|| default_center_floor(n));
        report.attention = Some(summarize_centers(&centers, cfg.num_slots, floor));
    }

    if opts.robustness {
        report.robustness = Some(lighting_robustness(model, data, opts)?);
    }
    Ok(Evaluation { report, centers })
}

/// Slot vectors of every matched object with the object's factor labels
/// (one label column per factor).
fn matched_samples(data: &Dataset, outputs: &[SceneOutput]) -> Result<(Samples, Vec<Vec<usize>>)> {
    let mut rows = Vec::new();
    let mut labels = vec![Vec::new(); factor_names().len()];
    let mut dim = 1;
    for (scene, o) in data.scenes.iter().zip(outputs) {
        let p = &o.prediction;
        dim = p.slot_dim();
        let assignment = match_slots(&p.pixel_labels, p.num_slots, &labels_of(scene), scene.object_count() + 1)?;
        for (object, slot) in assignment.into_iter().enumerate() {
            let Some(slot) = slot else { continue };
            rows.extend(p.slot(slot).iter().map(|&v| v as f64));
            for (column, l) in labels.iter_mut().zip(factor_labels(&scene.factors.objects[object])) {
                column.push(l);
            }
        }
    }
    Ok((Samples::new(dim, rows)?, labels))
}

/// Compares each object's slot in every lit variant with its slot in the
/// unlit variant, using the same slot initialization for both.
pub fn lighting_robustness(model: &SlotModel<f32>, data: &Dataset, opts: &EvalOptions) -> Result<RobustnessReport> {
    let lights = data.light_distances().to_vec();
    if !lights.contains(&0.0) {
        return Err(Error::ConfigMismatch("light_distances: dataset has no L = 0 variant to compare against".into()));
    }
    if lights.iter().all(|&l| l == 0.0) {
        return Err(Error::ConfigMismatch("light_distances: dataset has no lighting variants (only L = 0)".into()));
    }
    let seeds: Vec<u64> = (0..data.len()).map(|i| derive_seed(opts.seed, i as u64)).collect();
    let run = |l: f64| -> Result<Vec<SceneOutput>> {
        let imgs: Vec<&Image<f32>> = data
            .scenes
            .iter()
            .map(|s| s.image_at(l).ok_or_else(|| Error::ConfigMismatch(format!("scene {} lacks L = {l}", s.scene_id))))
            .collect::<Result<_>>()?;
        infer(model, &imgs, &seeds, opts.batch_size)
    };
    let base = run(0.0)?;
    let matches = |outs: &[SceneOutput]| -> Result<Vec<Vec<Option<usize>>>> {
        data.scenes
            .iter()
            .zip(outs)
            .map(|(s, o)| match_slots(&o.prediction.pixel_labels, o.prediction.num_slots, &labels_of(s), s.object_count() + 1))
            .collect()
    };
    let base_matches = matches(&base)?;

    let k = model.config().num_slots;
    let (mut cos_ref, mut euc_ref) = (Vec::new(), Vec::new());
    for o in &base {
        for a in 0..k {
            for b in a + 1..k {
                cos_ref.push(cosine_distance(o.prediction.slot(a), o.prediction.slot(b)));
                euc_ref.push(euclidean_distance(o.prediction.slot(a), o.prediction.slot(b)));
            }
        }
    }
    let reference_cosine = mean_of(cos_ref.into_iter());
    let reference_euclidean = mean_of(euc_ref.into_iter());

    let mut conditions = Vec::with_capacity(lights.len());
    for &l in &lights {
        let outs = if l == 0.0 { base.clone() } else { run(l)? };
        let (fg, mi) = segmentation_scores(data, &outs)?;
        let mut cond = LightingCondition {
            light_distance: l,
            fg_ari: fg,
            miou: mi.unwrap_or(0.0),
            cosine: None,
            euclidean: None,
            pairs: 0,
            excluded: 0,
        };
        if l != 0.0 {
            let lit_matches = matches(&outs)?;
            let (mut cos, mut euc) = (Vec::new(), Vec::new());
            for (i, (m0, ml)) in base_matches.iter().zip(&lit_matches).enumerate() {
                for (s0, sl) in m0.iter().zip(ml) {
                    match (s0, sl) {
                        (Some(a), Some(b)) => {
                            let (va, vb) = (base[i].prediction.slot(*a), outs[i].prediction.slot(*b));
                            cos.push(cosine_distance(va, vb));
                            euc.push(euclidean_distance(va, vb));
                        }
                        _ => cond.excluded += 1,
                    }
                }
            }
            cond.pairs = cos.len();
            let norm = |v: Vec<f64>, r: Option<f64>| r.filter(|r| *r > 0.0).and_then(|r| Stat::of(&v.iter().map(|x| x / r).collect::<Vec<_>>()));
            cond.cosine = norm(cos, reference_cosine);
            cond.euclidean = norm(euc, reference_euclidean);
        }
        conditions.push(cond);
    }
    Ok(RobustnessReport { reference_cosine, reference_euclidean, conditions })
}
