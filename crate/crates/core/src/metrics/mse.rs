use crate::color::{rgb_to_gray_pixel, rgb_view, ColorSpace, Image};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default reporting factor: errors on the 0–255 intensity scale.
pub const MSE_SCALE_255: f64 = 255.0 * 255.0;

/// Reconstruction error of a prediction in any target space, measured in RGB.
///
/// Composite spaces are compared on their RGB channels only, HSV and LAB are
/// converted back to RGB, `R` is compared on the red channel and `GRAY` on the
/// luma of the ground truth (neither can be inverted to full RGB).
/// The mean squared error is multiplied by `scale`.
pub fn mse_rgb<T: Scalar>(pred: &Image<T>, gt: &Image<T>, scale: f64) -> Result<f64> {
    gt.expect_space(ColorSpace::Rgb)?;
    if pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(Error::Shape(format!(
            "prediction is {}x{}, ground truth {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    let (a, b): (Vec<T>, Vec<T>) = match pred.space() {
        ColorSpace::R => (pred.data().to_vec(), gt.pixels().map(|p| p[0]).collect()),
        ColorSpace::Gray => (pred.data().to_vec(), gt.pixels().map(|p| rgb_to_gray_pixel([p[0], p[1], p[2]])).collect()),
        _ => (rgb_view(pred)?.into_data(), gt.data().to_vec()),
    };
    let n = a.len().max(1) as f64;
    let sum: f64 = a.iter().zip(&b).map(|(&x, &y)| (x.to_f64_lossy() - y.to_f64_lossy()).powi(2)).sum();
    Ok(scale * sum / n)
}
