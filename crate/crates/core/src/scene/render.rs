use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{derive_seed, DatasetConfig, SceneFactors, SceneStyle};
use crate::color::{hsv_to_rgb_pixel, ColorSpace, Image};

const OBJECT_TEXTURE_SALT: u64 = 0x6f62_6a65_6374;
const BACKGROUND_TEXTURE_SALT: u64 = 0x6261_636b_6772;
/// Base value of object materials before texture modulation.
const OBJECT_VALUE: f64 = 0.95;

/// Bilinear value noise on a `freq × freq` lattice, with amplitude `amp`.
struct ValueNoise {
    freq: usize,
    amp: f64,
    lattice: Vec<f64>,
}

impl ValueNoise {
    fn new(salt: u64, id: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(salt, id as u64));
        let freq = 2 + 2 * (id % 4);
        let amp = 0.15 + 0.1 * ((id / 4) % 4) as f64;
        let lattice = (0..(freq + 1) * (freq + 1)).map(|_| rng.random::<f64>()).collect();
        Self { freq, amp, lattice }
    }

    /// Noise in `[0, 1]` at texture coordinates `u, v ∈ [0, 1]`.
    fn sample(&self, u: f64, v: f64) -> f64 {
        let f = self.freq as f64;
        let (x, y) = (u.clamp(0.0, 1.0) * f, v.clamp(0.0, 1.0) * f);
        let (x0, y0) = ((x.floor() as usize).min(self.freq - 1), (y.floor() as usize).min(self.freq - 1));
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let (tx, ty) = (smooth(x - x0 as f64), smooth(y - y0 as f64));
        let at = |i: usize, j: usize| self.lattice[j * (self.freq + 1) + i];
        let top = at(x0, y0) * (1.0 - tx) + at(x0 + 1, y0) * tx;
        let bottom = at(x0, y0 + 1) * (1.0 - tx) + at(x0 + 1, y0 + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }

    /// Multiplicative value modulation in `[1 - amp, 1]`.
    fn shade(&self, u: f64, v: f64) -> f64 {
        1.0 - self.amp * self.sample(u, v)
    }
}

/// Renders stored factors at light distance 0, returning the RGB image and
/// the per-pixel segment labels.
pub fn render(cfg: &DatasetConfig, factors: &SceneFactors) -> (Image<f32>, Vec<u8>) {
    let n = cfg.image_size;
    let size = n as f64;
    let flat = cfg.style == SceneStyle::HighContrast;
    let bg = &factors.background;
    let bg_noise = bg.texture_id.map(|id| ValueNoise::new(BACKGROUND_TEXTURE_SALT, id));
    let textures: Vec<Option<ValueNoise>> = factors
        .objects
        .iter()
        .map(|o| (!flat).then(|| ValueNoise::new(OBJECT_TEXTURE_SALT, o.texture_id)))
        .collect();

    let mut data = Vec::with_capacity(n * n * 3);
    let mut labels = vec![0u8; n * n];
    for y in 0..n {
        for x in 0..n {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let shade = bg_noise.as_ref().map_or(1.0, |t| t.shade(px / size, py / size));
            let mut hsv = [bg.hue, bg.saturation, bg.value * shade];
            // painter's algorithm: later objects cover earlier ones
            for (i, o) in factors.objects.iter().enumerate() {
                let r = o.size.radius(n);
                let (dx, dy) = (px - o.position[0], py - o.position[1]);
                if o.shape.contains(dx, dy, r) {
                    let shade = textures[i].as_ref().map_or(1.0, |t| t.shade(0.5 + dx / (2.0 * r), 0.5 + dy / (2.0 * r)));
                    hsv = [o.material_hue, o.material_saturation, OBJECT_VALUE * shade];
                    labels[y * n + x] = (i + 1) as u8;
                }
            }
            data.extend(hsv_to_rgb_pixel(hsv).map(|c| c as f32));
        }
    }
    (Image::new(n, n, ColorSpace::Rgb, data).expect("rendered buffer matches size"), labels)
}
