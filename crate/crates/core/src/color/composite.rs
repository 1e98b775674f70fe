use super::convert::{hsv_to_rgb_pixel, lab_to_rgb_pixel, rgb_to_gray_pixel, rgb_to_hsv_pixel, rgb_to_lab_pixel};
use super::image::Image;
use super::space::ColorSpace;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Builds the reconstruction target for `space` from an RGB image.
pub fn compose_target<T: Scalar>(img: &Image<T>, space: ColorSpace) -> Result<Image<T>> {
    img.expect_space(ColorSpace::Rgb)?;
    Ok(img.map_pixels(space, |p, out| {
        let rgb = [p[0], p[1], p[2]];
        match space {
            ColorSpace::Rgb => out.copy_from_slice(&rgb),
            ColorSpace::Hsv => out.copy_from_slice(&rgb_to_hsv_pixel(rgb)),
            ColorSpace::Lab => out.copy_from_slice(&rgb_to_lab_pixel(rgb)),
            ColorSpace::Gray => out[0] = rgb_to_gray_pixel(rgb),
            ColorSpace::R => out[0] = rgb[0],
            ColorSpace::RgbS | ColorSpace::RgbSv | ColorSpace::RgbHsv => {
                let [h, s, v] = rgb_to_hsv_pixel(rgb);
                out[..3].copy_from_slice(&rgb);
                match space {
                    ColorSpace::RgbS => out[3] = s,
                    ColorSpace::RgbSv => out[3..].copy_from_slice(&[s, v]),
                    _ => out[3..].copy_from_slice(&[h, s, v]),
                }
            }
        }
    }))
}

/// RGB reading of an image in any space, used for reconstruction error.
///
/// Composite spaces keep their first three channels and drop the rest. The
/// single-channel `R` space yields a one-channel `R` image, since the other
/// two channels cannot be recovered from it.
pub fn rgb_view<T: Scalar>(img: &Image<T>) -> Result<Image<T>> {
    let space = img.space();
    let view = match space {
        ColorSpace::Rgb => img.clone(),
        ColorSpace::R => img.clone(),
        ColorSpace::Hsv => img.map_pixels(ColorSpace::Rgb, |p, o| o.copy_from_slice(&hsv_to_rgb_pixel([p[0], p[1], p[2]]))),
        ColorSpace::Lab => img.map_pixels(ColorSpace::Rgb, |p, o| o.copy_from_slice(&lab_to_rgb_pixel([p[0], p[1], p[2]]))),
        ColorSpace::Gray => img.map_pixels(ColorSpace::Rgb, |p, o| o.fill(p[0])),
        ColorSpace::RgbS | ColorSpace::RgbSv | ColorSpace::RgbHsv => {
            img.map_pixels(ColorSpace::Rgb, |p, o| o.copy_from_slice(&p[..3]))
        }
    };
    if view.space() != ColorSpace::Rgb && view.space() != ColorSpace::R {
        return Err(Error::UnknownColorSpace(space.id().to_string()));
    }
    Ok(view)
}
