//! Color conversions, composite reconstruction targets and channel statistics.

mod composite;
mod convert;
mod correlation;
mod image;
mod space;

pub use composite::{compose_target, rgb_view};
pub use convert::{
    hsv_to_rgb, hsv_to_rgb_pixel, lab_to_rgb, lab_to_rgb_pixel, rgb_to_gray, rgb_to_gray_pixel, rgb_to_hsv,
    rgb_to_hsv_pixel, rgb_to_lab, rgb_to_lab_pixel,
};
pub use correlation::{channel_correlation, Channel, CorrelationMatrix};
pub use image::Image;
pub use space::ColorSpace;
