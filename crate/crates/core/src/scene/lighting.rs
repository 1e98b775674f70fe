use super::Scene;
use crate::color::{hsv_to_rgb_pixel, rgb_to_hsv_pixel};
use crate::error::{Error, Result};

/// Global darkening `base(L) = 1 / (1 + L/20)`: 1 at `L = 0`, strictly decreasing.
pub fn base_attenuation(light_distance: f64) -> f64 {
    1.0 / (1.0 + light_distance / 20.0)
}

/// Attenuation `a(L, x, y) = base(L) · exp(-(L/40) · d²)` at pixel center `(x, y)`,
/// where `d` is the distance to the light anchor in units of the image side.
/// The radial term vanishes at `L = 0`, so lighting starts from the identity.
pub fn attenuation(light_distance: f64, anchor: [f64; 2], x: f64, y: f64, image_size: usize) -> f64 {
    let s = image_size as f64;
    let d2 = ((x - anchor[0]).powi(2) + (y - anchor[1]).powi(2)) / (s * s);
    base_attenuation(light_distance) * (-(light_distance / 40.0) * d2).exp()
}

/// Re-lights a scene rendered at `L = 0` by scaling the HSV value channel.
/// Hue, saturation, masks and factors are untouched.
pub fn apply_lighting(scene: &Scene, light_distance: f64) -> Result<Scene> {
    if !light_distance.is_finite() || light_distance < 0.0 {
        return Err(Error::InvalidArgument(format!("light distance must be finite and non-negative, got {light_distance}")));
    }
    if scene.light_distance != 0.0 {
        return Err(Error::InvalidArgument(format!(
            "lighting applies to scenes rendered at L = 0, this one has L = {}",
            scene.light_distance
        )));
    }
    let mut out = scene.clone();
    out.light_distance = light_distance;
    if light_distance == 0.0 {
        return Ok(out);
    }
    let (h, w) = (scene.image.height(), scene.image.width());
    let anchor = scene.factors.light_anchor;
    let data = out.image.data_mut();
    for y in 0..h {
        for x in 0..w {
            let a = attenuation(light_distance, anchor, x as f64 + 0.5, y as f64 + 0.5, w.max(h));
            let px = &mut data[(y * w + x) * 3..(y * w + x + 1) * 3];
            let mut hsv = rgb_to_hsv_pixel([px[0] as f64, px[1] as f64, px[2] as f64]);
            hsv[2] *= a;
            let rgb = hsv_to_rgb_pixel(hsv);
            for (dst, v) in px.iter_mut().zip(rgb) {
                *dst = v as f32;
            }
        }
    }
    Ok(out)
}
