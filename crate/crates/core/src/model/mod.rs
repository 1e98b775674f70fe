//! Encoder → Slot Attention → spatial broadcast decoder.

mod checkpoint;
mod config;
mod network;

pub use checkpoint::{CheckpointConfig, ParamEntry};
pub use config::{ConvSpec, ModelConfig};
pub use network::{position_grid, slot_noise, ForwardPass, SlotAttentionParams, SlotModel};
