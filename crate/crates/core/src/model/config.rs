use serde::{Deserialize, Serialize};

use crate::color::ColorSpace;
use crate::error::{Error, Result};

/// One convolutional layer: output channels, square kernel size and stride.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvSpec {
    pub const fn new(channels: usize, kernel: usize, stride: usize) -> Self {
        Self { channels, kernel, stride }
    }
}

fn default_input_space() -> ColorSpace {
    ColorSpace::Rgb
}

/// Architecture of the encoder → Slot Attention → broadcast decoder pipeline.
///
/// Decoder layers with stride 2 are transposed convolutions that double the
/// spatial size; the final layer (not listed) maps to the target channels
/// plus one alpha logit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub image_size: usize,
    #[serde(default = "default_input_space")]
    pub input_space: ColorSpace,
    pub encoder: Vec<ConvSpec>,
    /// Width of the per-position feature vectors fed to Slot Attention.
    pub encoder_dim: usize,
    pub num_slots: usize,
    pub slot_dim: usize,
    /// Hidden width of the residual slot MLP.
    pub mlp_hidden: usize,
    pub sa_iterations: usize,
    pub decoder: Vec<ConvSpec>,
    pub decoder_out_kernel: usize,
    pub broadcast_grid: [usize; 2],
    pub target_space: ColorSpace,
}

impl ModelConfig {
    /// Compact configuration for 32×32 scenes with up to `max_objects` objects.
    pub fn desk(target_space: ColorSpace, max_objects: usize) -> Self {
        Self {
            image_size: 32,
            input_space: ColorSpace::Rgb,
            encoder: vec![ConvSpec::new(32, 5, 1), ConvSpec::new(32, 5, 2), ConvSpec::new(32, 3, 1), ConvSpec::new(32, 3, 1)],
            encoder_dim: 32,
            num_slots: max_objects + 1,
            slot_dim: 32,
            mlp_hidden: 64,
            sa_iterations: 3,
            decoder: vec![ConvSpec::new(32, 3, 2), ConvSpec::new(32, 3, 2)],
            decoder_out_kernel: 3,
            broadcast_grid: [8, 8],
            target_space,
        }
    }

    pub fn color_channels(&self) -> usize {
        self.target_space.channel_count()
    }

    /// Channels of the final decoder layer: target channels plus alpha.
    pub fn decoder_output_channels(&self) -> usize {
        self.color_channels() + 1
    }

    /// Spatial side of the encoder feature map.
    pub fn feature_size(&self) -> usize {
        self.encoder.iter().fold(self.image_size, |s, l| s.div_ceil(l.stride))
    }

    pub fn feature_positions(&self) -> usize {
        self.feature_size() * self.feature_size()
    }

    pub fn encoder_channels(&self) -> usize {
        self.encoder.last().map_or(self.input_space.channel_count(), |l| l.channels)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_slots == 0 {
            return bad("num_slots must be at least 1".into());
        }
        if self.sa_iterations == 0 {
            return bad("sa_iterations must be at least 1".into());
        }
        if self.image_size == 0 || self.slot_dim == 0 || self.encoder_dim == 0 || self.mlp_hidden == 0 {
            return bad("sizes must be positive".into());
        }
        for l in self.encoder.iter().chain(&self.decoder) {
            if !(1..=2).contains(&l.stride) || l.kernel == 0 || l.channels == 0 {
                return bad(format!("invalid layer {l:?}"));
            }
        }
        if self.decoder_out_kernel == 0 {
            return bad("decoder_out_kernel must be positive".into());
        }
        let [gh, gw] = self.broadcast_grid;
        let up: usize = self.decoder.iter().map(|l| l.stride).product();
        if gh * up != self.image_size || gw * up != self.image_size {
            return bad(format!(
                "broadcast grid {gh}x{gw} upsampled by {up} does not reach image size {}",
                self.image_size
            ));
        }
        Ok(())
    }
}
