//! Object-centric representation learning with composite color-space targets.
//!
//! The crate covers the whole pipeline: procedural scenes with ground-truth
//! masks, color conversions and composite targets, a small reverse-mode
//! autodiff engine, the Slot Attention autoencoder, its training loop and the
//! evaluation metrics. Numeric code is generic over [`Scalar`]; the aliases
//! below fix the two precisions used in practice.

pub mod autodiff;
pub mod color;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod scene;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Training-precision tensor.
pub type Tensor32 = autodiff::Tensor<f32>;
/// Reference-precision tensor used for gradient checks.
pub type Tensor64 = autodiff::Tensor<f64>;
pub type Graph32 = autodiff::Graph<f32>;
pub type Graph64 = autodiff::Graph<f64>;
pub type Image32 = color::Image<f32>;
pub type Image64 = color::Image<f64>;
