//! Per-pixel conversions between RGB and the derived spaces.
//!
//! HSV follows the hexcone model with hue stored as a fraction of a turn.
//! CIELAB assumes sRGB primaries and a D65 white and stores the channels
//! rescaled to the unit interval: `L*/100`, `(a*+128)/255`, `(b*+128)/255`.

use super::image::Image;
use super::space::ColorSpace;
use crate::error::Result;
use crate::scalar::{lit, Scalar};

/// Hexcone RGB → HSV. Achromatic pixels get hue 0; black gets saturation 0.
pub fn rgb_to_hsv_pixel<T: Scalar>(rgb: [T; 3]) -> [T; 3] {
    let [r, g, b] = rgb;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > T::zero() { delta / max } else { T::zero() };
    let h = if delta <= T::zero() {
        T::zero()
    } else {
        let sector = if max == r {
            let h = (g - b) / delta;
            if h < T::zero() {
                h + lit(6.0)
            } else {
                h
            }
        } else if max == g {
            (b - r) / delta + lit(2.0)
        } else {
            (r - g) / delta + lit(4.0)
        };
        let h = sector / lit(6.0);
        if h >= T::one() {
            h - T::one()
        } else {
            h
        }
    };
    [h, s, max]
}

pub fn hsv_to_rgb_pixel<T: Scalar>(hsv: [T; 3]) -> [T; 3] {
    let [h, s, v] = hsv;
    if s <= T::zero() {
        return [v, v, v];
    }
    let h6 = (h - h.floor()) * lit(6.0);
    let sector = h6.floor();
    let f = h6 - sector;
    let p = v * (T::one() - s);
    let q = v * (T::one() - s * f);
    let t = v * (T::one() - s * (T::one() - f));
    match sector.to_usize().unwrap_or(0) % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

const XYZ_TO_SRGB: [[f64; 3]; 3] = [
    [3.240_454_2, -1.537_138_5, -0.498_531_4],
    [-0.969_266_0, 1.876_010_8, 0.041_556_0],
    [0.055_643_4, -0.204_025_9, 1.057_225_2],
];

const D65_WHITE: [f64; 3] = [0.950_47, 1.0, 1.088_83];

fn srgb_decode<T: Scalar>(c: T) -> T {
    if c <= lit(0.04045) {
        c / lit(12.92)
    } else {
        ((c + lit(0.055)) / lit(1.055)).powf(lit(2.4))
    }
}

fn srgb_encode<T: Scalar>(c: T) -> T {
    let c = c.max(T::zero());
    if c <= lit(0.003_130_8) {
        c * lit(12.92)
    } else {
        lit::<T>(1.055) * c.powf(lit(1.0 / 2.4)) - lit(0.055)
    }
}

fn apply<T: Scalar>(m: &[[f64; 3]; 3], v: [T; 3]) -> [T; 3] {
    let row = |r: &[f64; 3]| lit::<T>(r[0]) * v[0] + lit::<T>(r[1]) * v[1] + lit::<T>(r[2]) * v[2];
    [row(&m[0]), row(&m[1]), row(&m[2])]
}

fn lab_f<T: Scalar>(t: T) -> T {
    let delta: T = lit(6.0 / 29.0);
    if t > delta * delta * delta {
        t.cbrt()
    } else {
        t / (lit::<T>(3.0) * delta * delta) + lit(4.0 / 29.0)
    }
}

fn lab_f_inv<T: Scalar>(f: T) -> T {
    let delta: T = lit(6.0 / 29.0);
    if f > delta {
        f * f * f
    } else {
        lit::<T>(3.0) * delta * delta * (f - lit(4.0 / 29.0))
    }
}

/// sRGB → stored (unit-interval) CIELAB.
pub fn rgb_to_lab_pixel<T: Scalar>(rgb: [T; 3]) -> [T; 3] {
    let linear = rgb.map(srgb_decode);
    let xyz = apply(&SRGB_TO_XYZ, linear);
    let fx = lab_f(xyz[0] / lit(D65_WHITE[0]));
    let fy = lab_f(xyz[1] / lit(D65_WHITE[1]));
    let fz = lab_f(xyz[2] / lit(D65_WHITE[2]));
    let l = lit::<T>(116.0) * fy - lit(16.0);
    let a = lit::<T>(500.0) * (fx - fy);
    let b = lit::<T>(200.0) * (fy - fz);
    [l / lit(100.0), (a + lit(128.0)) / lit(255.0), (b + lit(128.0)) / lit(255.0)]
}

/// Stored CIELAB → sRGB, clamped to the unit cube.
pub fn lab_to_rgb_pixel<T: Scalar>(lab: [T; 3]) -> [T; 3] {
    let l = lab[0] * lit(100.0);
    let a = lab[1] * lit(255.0) - lit(128.0);
    let b = lab[2] * lit(255.0) - lit(128.0);
    let fy = (l + lit(16.0)) / lit(116.0);
    let fx = fy + a / lit(500.0);
    let fz = fy - b / lit(200.0);
    let xyz = [
        lab_f_inv(fx) * lit(D65_WHITE[0]),
        lab_f_inv(fy) * lit(D65_WHITE[1]),
        lab_f_inv(fz) * lit(D65_WHITE[2]),
    ];
    apply(&XYZ_TO_SRGB, xyz).map(|c| srgb_encode(c).min(T::one()))
}

/// BT.601 luma. Integer weights keep white at exactly 1.
pub fn rgb_to_gray_pixel<T: Scalar>(rgb: [T; 3]) -> T {
    (lit::<T>(299.0) * rgb[0] + lit::<T>(587.0) * rgb[1] + lit::<T>(114.0) * rgb[2]) / lit(1000.0)
}

fn triple<T: Scalar>(p: &[T]) -> [T; 3] {
    [p[0], p[1], p[2]]
}

pub fn rgb_to_hsv<T: Scalar>(img: &Image<T>) -> Result<Image<T>> {
    img.expect_space(ColorSpace::Rgb)?;
    Ok(img.map_pixels(ColorSpace::Hsv, |s, d| d.copy_from_slice(&rgb_to_hsv_pixel(triple(s)))))
}

pub fn hsv_to_rgb<T: Scalar>(img: &Image<T>) -> Result<Image<T>> {
    img.expect_space(ColorSpace::Hsv)?;
    Ok(img.map_pixels(ColorSpace::Rgb, |s, d| d.copy_from_slice(&hsv_to_rgb_pixel(triple(s)))))
}

pub fn rgb_to_lab<T: Scalar>(img: &Image<T>) -> Result<Image<T>> {
    img.expect_space(ColorSpace::Rgb)?;
    Ok(img.map_pixels(ColorSpace::Lab, |s, d| d.copy_from_slice(&rgb_to_lab_pixel(triple(s)))))
}

pub fn lab_to_rgb<T: Scalar>(img: &Image<T>) -> Result<Image<T>> {
    img.expect_space(ColorSpace::Lab)?;
    Ok(img.map_pixels(ColorSpace::Rgb, |s, d| d.copy_from_slice(&lab_to_rgb_pixel(triple(s)))))
}

pub fn rgb_to_gray<T: Scalar>(img: &Image<T>) -> Result<Image<T>> {
    img.expect_space(ColorSpace::Rgb)?;
    Ok(img.map_pixels(ColorSpace::Gray, |s, d| d[0] = rgb_to_gray_pixel(triple(s))))
}
