//! Procedural multi-object scenes with ground-truth masks, factor records and
//! a light-distance control.
//!
//! Scenes are flat 2-D compositions painted rear to front. Every object and
//! the background carry a base hue/saturation and a value-noise texture, so a
//! scene can be re-rendered exactly from its stored factors.

mod dataset;
mod lighting;
mod render;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::color::Image;
use crate::error::{Error, Result};

pub use dataset::{derive_seed, generate_dataset, Dataset, DatasetManifest, ImageEntry, LoadedScene, SceneEntry, SCHEMA_VERSION};
pub use lighting::{apply_lighting, attenuation, base_attenuation};
pub use render::render;

/// Maximum placement attempts per object before generation fails.
pub const PLACEMENT_ATTEMPTS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Circle,
    Square,
    Triangle,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 3] = [ShapeKind::Circle, ShapeKind::Square, ShapeKind::Triangle];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Whether offset `(dx, dy)` from the center lies inside a shape of half-extent `r`.
    pub fn contains(self, dx: f64, dy: f64, r: f64) -> bool {
        match self {
            ShapeKind::Circle => dx * dx + dy * dy <= r * r,
            ShapeKind::Square => dx.abs() <= 0.9 * r && dy.abs() <= 0.9 * r,
            // apex up, base of width 2r at the bottom
            ShapeKind::Triangle => dy.abs() <= r && dx.abs() <= 0.5 * (dy + r),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

impl SizeClass {
    pub const ALL: [SizeClass; 3] = [SizeClass::Small, SizeClass::Medium, SizeClass::Large];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Half-extent in pixels for a square image of side `image_size`.
    pub fn radius(self, image_size: usize) -> f64 {
        let fraction = match self {
            SizeClass::Small => 0.10,
            SizeClass::Medium => 0.14,
            SizeClass::Large => 0.18,
        };
        fraction * image_size as f64
    }
}

/// Generative factors of one foreground object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorRecord {
    pub shape: ShapeKind,
    pub size: SizeClass,
    pub material_hue: f64,
    pub material_saturation: f64,
    pub texture_id: usize,
    /// Center `(x, y)` in pixels.
    pub position: [f64; 2],
}

/// Appearance of the background layer; `texture_id: None` means flat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub hue: f64,
    pub saturation: f64,
    pub value: f64,
    pub texture_id: Option<usize>,
}

/// Everything needed to re-render a scene, stored as `factors.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneFactors {
    pub seed: u64,
    pub objects: Vec<FactorRecord>,
    pub background: Background,
    /// Light anchor `(x, y)` in pixels; the falloff is centered here.
    pub light_anchor: [f64; 2],
}

/// Appearance family of a dataset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneStyle {
    /// Textured objects of any saturation on a textured, weakly colored background.
    #[default]
    Textured,
    /// Flat, strongly saturated objects on a flat mid-gray background.
    HighContrast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub scene_count: usize,
    #[serde(default = "default_image_size")]
    pub image_size: usize,
    #[serde(default = "default_object_range")]
    pub object_count_range: [usize; 2],
    #[serde(default = "default_texture_count")]
    pub texture_count: usize,
    #[serde(default = "default_background_textures")]
    pub background_texture_count: usize,
    #[serde(default = "default_lights")]
    pub light_distances: Vec<f64>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub style: SceneStyle,
}

fn default_image_size() -> usize {
    32
}
fn default_object_range() -> [usize; 2] {
    [1, 3]
}
fn default_texture_count() -> usize {
    16
}
fn default_background_textures() -> usize {
    4
}
fn default_lights() -> Vec<f64> {
    vec![0.0]
}

impl DatasetConfig {
    pub fn new(scene_count: usize, image_size: usize, object_count_range: [usize; 2]) -> Self {
        Self {
            scene_count,
            image_size,
            object_count_range,
            texture_count: default_texture_count(),
            background_texture_count: default_background_textures(),
            light_distances: default_lights(),
            master_seed: 0,
            style: SceneStyle::default(),
        }
    }

    /// The smoke-training family: flat saturated objects on gray.
    pub fn high_contrast(scene_count: usize, image_size: usize, objects: usize) -> Self {
        Self { style: SceneStyle::HighContrast, ..Self::new(scene_count, image_size, [objects, objects]) }
    }

    pub fn max_objects(&self) -> usize {
        self.object_count_range[1]
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.object_count_range;
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if lo < 1 || hi < lo {
            return fail(format!("object_count_range {:?} must satisfy 1 <= min <= max", self.object_count_range));
        }
        if hi > u8::MAX as usize - 1 {
            return fail(format!("at most {} objects per scene", u8::MAX - 1));
        }
        if self.image_size < 8 {
            return fail(format!("image_size {} is below the minimum of 8", self.image_size));
        }
        if self.texture_count == 0 || self.background_texture_count == 0 {
            return fail("texture counts must be positive".into());
        }
        if self.light_distances.is_empty() {
            return fail("light_distances must not be empty".into());
        }
        if let Some(l) = self.light_distances.iter().find(|l| !l.is_finite() || **l < 0.0) {
            return fail(format!("light distance {l} must be finite and non-negative"));
        }
        Ok(())
    }
}

/// A rendered scene. `labels` holds the owning segment per pixel
/// (0 = background, `i + 1` = object `i`), so the masks partition the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub image: Image<f32>,
    pub labels: Vec<u8>,
    pub factors: SceneFactors,
    pub light_distance: f64,
}

impl Scene {
    pub fn object_count(&self) -> usize {
        self.factors.objects.len()
    }

    pub fn seed(&self) -> u64 {
        self.factors.seed
    }

    /// One-hot masks `[objects + 1, H, W]` with 0.0/1.0 entries.
    pub fn masks(&self) -> Tensor<f32> {
        labels_to_masks(&self.labels, self.object_count() + 1, self.image.height(), self.image.width())
    }
}

pub(crate) fn labels_to_masks(labels: &[u8], segments: usize, h: usize, w: usize) -> Tensor<f32> {
    let mut data = vec![0.0f32; segments * h * w];
    for (p, &l) in labels.iter().enumerate() {
        data[l as usize * h * w + p] = 1.0;
    }
    Tensor::new(&[segments, h, w], data).expect("mask length matches")
}

/// Draws and renders a scene at light distance 0.
pub fn generate_scene(cfg: &DatasetConfig, seed: u64) -> Result<Scene> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = cfg.image_size as f64;
    let [lo, hi] = cfg.object_count_range;
    let count = rng.random_range(lo..=hi);

    let background = match cfg.style {
        SceneStyle::Textured => Background {
            hue: rng.random::<f64>(),
            saturation: rng.random_range(0.0..0.25),
            value: rng.random_range(0.3..0.85),
            texture_id: Some(rng.random_range(0..cfg.background_texture_count)),
        },
        SceneStyle::HighContrast => Background { hue: 0.0, saturation: 0.0, value: 0.5, texture_id: None },
    };

    let mut objects: Vec<FactorRecord> = Vec::with_capacity(count);
    for index in 0..count {
        let shape = ShapeKind::ALL[rng.random_range(0..3)];
        let size_class = SizeClass::ALL[rng.random_range(0..3)];
        let material_hue = rng.random::<f64>();
        let material_saturation = match cfg.style {
            SceneStyle::Textured => rng.random_range(0.15..0.85),
            SceneStyle::HighContrast => rng.random_range(0.8..=1.0),
        };
        let texture_id = rng.random_range(0..cfg.texture_count);
        let r = size_class.radius(cfg.image_size);
        let position = place(&mut rng, &objects, r, size, cfg.image_size)
            .ok_or(Error::Placement { object: index, attempts: PLACEMENT_ATTEMPTS })?;
        objects.push(FactorRecord { shape, size: size_class, material_hue, material_saturation, texture_id, position });
    }
    let light_anchor = [rng.random_range(0.0..size), rng.random_range(0.0..size)];

    let factors = SceneFactors { seed, objects, background, light_anchor };
    let (image, labels) = render(cfg, &factors);
    Ok(Scene { image, labels, factors, light_distance: 0.0 })
}

/// Samples a center whose footprint stays inside the image and keeps a minimum
/// spacing to the objects placed so far, so every object stays visible.
fn place(rng: &mut ChaCha8Rng, placed: &[FactorRecord], r: f64, size: f64, image_size: usize) -> Option<[f64; 2]> {
    if size - 2.0 * r <= 0.0 {
        return None;
    }
    for _ in 0..PLACEMENT_ATTEMPTS {
        let p = [rng.random_range(r..size - r), rng.random_range(r..size - r)];
        let clear = placed.iter().all(|o| {
            let (dx, dy) = (o.position[0] - p[0], o.position[1] - p[1]);
            let min = 0.9 * (r + o.size.radius(image_size));
            dx * dx + dy * dy >= min * min
        });
        if clear {
            return Some(p);
        }
    }
    None
}
