//! Minimal reverse-mode automatic differentiation over dense arrays.

mod adam;
mod gradcheck;
mod graph;
mod kernels;
pub mod nn;
mod params;
mod tensor;

pub use adam::AdamState;
pub use gradcheck::{grad_check, relative_error, GradCheckReport, Probe};
pub use graph::{Graph, Var};
pub use params::{BoundParams, ParamId, ParamStore};
pub use tensor::Tensor;
