use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{apply_lighting, generate_scene, labels_to_masks, DatasetConfig, SceneFactors};
use crate::autodiff::Tensor;
use crate::color::{ColorSpace, Image};
use crate::error::{Error, Result};
use crate::io;

pub const SCHEMA_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";

/// SplitMix64 finalizer over `(master, index)`: independent per-scene seeds
/// that do not depend on generation order.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelConventions {
    pub image: String,
    pub masks: String,
}

impl Default for ChannelConventions {
    fn default() -> Self {
        Self {
            image: "[H, W, 3] RGB intensities in [0, 1]".into(),
            masks: "[objects + 1, H, W] one-hot 0/1, index 0 is background".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub light_distance: f64,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub scene_id: String,
    pub seed: u64,
    pub object_count: usize,
    pub images: Vec<ImageEntry>,
    pub masks: String,
    pub factors: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub generator: DatasetConfig,
    pub channel_conventions: ChannelConventions,
    pub scenes: Vec<SceneEntry>,
}

/// Generates `cfg.scene_count` scenes under `out`, one file set per scene,
/// and writes `manifest.json` last. `threads` workers split the scene range.
pub fn generate_dataset(cfg: &DatasetConfig, out: &Path, threads: usize) -> Result<DatasetManifest> {
    cfg.validate()?;
    io::create_dir_all(out)?;
    let manifest_path = out.join(MANIFEST);
    if manifest_path.exists() {
        // invalidate the old dataset before touching its files
        std::fs::remove_file(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    }

    let n = cfg.scene_count;
    let threads = threads.clamp(1, n.max(1));
    let per = n.div_ceil(threads).max(1);
    let chunks: Vec<Result<Vec<SceneEntry>>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..n)
            .step_by(per)
            .map(|start| s.spawn(move || (start..(start + per).min(n)).map(|i| write_scene(cfg, out, i)).collect()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("scene worker panicked")).collect()
    });
    let mut scenes = Vec::with_capacity(n);
    for chunk in chunks {
        scenes.extend(chunk?);
    }

    let manifest = DatasetManifest {
        schema_version: SCHEMA_VERSION,
        generator: cfg.clone(),
        channel_conventions: ChannelConventions::default(),
        scenes,
    };
    io::write_json(&manifest_path, &manifest)?;
    Ok(manifest)
}

fn write_scene(cfg: &DatasetConfig, out: &Path, index: usize) -> Result<SceneEntry> {
    let seed = derive_seed(cfg.master_seed, index as u64);
    let scene = generate_scene(cfg, seed)?;
    let scene_id = format!("{index:06}");
    let rel = format!("scenes/{scene_id}");
    io::create_dir_all(&out.join(&rel))?;

    let mut images = Vec::with_capacity(cfg.light_distances.len());
    for (i, &l) in cfg.light_distances.iter().enumerate() {
        let lit = apply_lighting(&scene, l)?;
        let file = format!("{rel}/image_{i}.oct");
        io::write_tensor(&out.join(&file), &lit.image.to_tensor())?;
        images.push(ImageEntry { light_distance: l, file });
    }
    let masks = format!("{rel}/masks.oct");
    io::write_tensor(&out.join(&masks), &scene.masks())?;
    let factors = format!("{rel}/factors.json");
    io::write_json(&out.join(&factors), &scene.factors)?;
    Ok(SceneEntry { scene_id, seed, object_count: scene.object_count(), images, masks, factors })
}

/// One scene loaded from disk with all of its lighting variants.
#[derive(Clone, Debug)]
pub struct LoadedScene {
    pub scene_id: String,
    /// `(light distance, image)` in manifest order.
    pub images: Vec<(f64, Image<f32>)>,
    /// Segment per pixel, 0 = background.
    pub labels: Vec<u8>,
    pub factors: SceneFactors,
}

impl LoadedScene {
    pub fn object_count(&self) -> usize {
        self.factors.objects.len()
    }

    /// The variant at exactly `light_distance`, if present.
    pub fn image_at(&self, light_distance: f64) -> Option<&Image<f32>> {
        self.images.iter().find(|(l, _)| *l == light_distance).map(|(_, img)| img)
    }

    /// The first listed variant.
    pub fn primary_image(&self) -> &Image<f32> {
        &self.images[0].1
    }

    pub fn masks(&self) -> Tensor<f32> {
        let img = self.primary_image();
        labels_to_masks(&self.labels, self.object_count() + 1, img.height(), img.width())
    }
}

/// A fully loaded dataset directory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub scenes: Vec<LoadedScene>,
}

impl Dataset {
    /// Loads a dataset; a directory without `manifest.json` is rejected.
    pub fn open(root: &Path) -> Result<Self> {
        let manifest: DatasetManifest = io::read_json(&root.join(MANIFEST))?;
        if manifest.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "dataset schema version {} is not supported (expected {SCHEMA_VERSION})",
                manifest.schema_version
            )));
        }
        let size = manifest.generator.image_size;
        let mut scenes = Vec::with_capacity(manifest.scenes.len());
        for entry in &manifest.scenes {
            let mut images = Vec::with_capacity(entry.images.len());
            for img in &entry.images {
                let t = io::read_tensor(&root.join(&img.file))?;
                if t.shape() != [size, size, 3] {
                    return Err(Error::Shape(format!("{} has shape {:?}, expected [{size}, {size}, 3]", img.file, t.shape())));
                }
                images.push((img.light_distance, Image::from_tensor(&t, ColorSpace::Rgb)?));
            }
            let masks = io::read_tensor(&root.join(&entry.masks))?;
            let labels = masks_to_labels(&masks, entry.object_count + 1, size)
                .map_err(|reason| Error::TensorFormat { path: root.join(&entry.masks), reason })?;
            let factors: SceneFactors = io::read_json(&root.join(&entry.factors))?;
            scenes.push(LoadedScene { scene_id: entry.scene_id.clone(), images, labels, factors });
        }
        Ok(Self { root: root.to_path_buf(), manifest, scenes })
    }

    pub fn image_size(&self) -> usize {
        self.manifest.generator.image_size
    }

    pub fn light_distances(&self) -> &[f64] {
        &self.manifest.generator.light_distances
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }
}

fn masks_to_labels(masks: &Tensor<f32>, segments: usize, size: usize) -> std::result::Result<Vec<u8>, String> {
    if masks.shape() != [segments, size, size] {
        return Err(format!("shape {:?}, expected [{segments}, {size}, {size}]", masks.shape()));
    }
    let px = size * size;
    let d = masks.data();
    (0..px)
        .map(|p| {
            let on: Vec<usize> = (0..segments).filter(|&k| d[k * px + p] == 1.0).collect();
            match on.as_slice() {
                [k] if (0..segments).all(|j| d[j * px + p] == 0.0 || j == *k) => Ok(*k as u8),
                _ => Err(format!("pixel {p} is not covered by exactly one mask")),
            }
        })
        .collect()
}
