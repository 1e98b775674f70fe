use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, SlotModel};
use crate::autodiff::ParamStore;
use crate::color::ColorSpace;
use crate::error::{Error, Result};
use crate::io;

/// `config.json` of a checkpoint directory. The channel counts are derived
/// from `model.target_space` and stored so the layout is readable without code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointConfig {
    pub model: ModelConfig,
    pub target: ColorSpace,
    pub channel_count: usize,
    pub output_channels: usize,
}

/// One entry of `params.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
}

impl SlotModel<f32> {
    /// Writes `config.json`, `params.json` and one tensor file per parameter.
    pub fn save(&self, dir: &Path) -> Result<()> {
        io::create_dir_all(&dir.join("params"))?;
        let config = self.config();
        let header = CheckpointConfig {
            model: config.clone(),
            target: config.target_space,
            channel_count: config.color_channels(),
            output_channels: config.decoder_output_channels(),
        };
        let mut index = Vec::with_capacity(self.params().len());
        for (name, tensor) in self.params().names().iter().zip(self.params().tensors()) {
            let file = format!("params/{name}.oct");
            io::write_tensor(&dir.join(&file), tensor)?;
            index.push(ParamEntry { name: name.clone(), shape: tensor.shape().to_vec(), file });
        }
        io::write_json(&dir.join("params.json"), &index)?;
        // written last: a directory without config.json is not a checkpoint
        io::write_json(&dir.join("config.json"), &header)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let header: CheckpointConfig = io::read_json(&dir.join("config.json"))?;
        if header.target != header.model.target_space
            || header.channel_count != header.model.color_channels()
            || header.output_channels != header.model.decoder_output_channels()
        {
            return Err(Error::ConfigMismatch(format!(
                "{}: channel layout fields disagree with the model config",
                dir.display()
            )));
        }
        let index: Vec<ParamEntry> = io::read_json(&dir.join("params.json"))?;
        let mut model = SlotModel::new(header.model, 0)?;
        let mut store = ParamStore::new();
        for entry in &index {
            let t = io::read_tensor(&dir.join(&entry.file))?;
            if t.shape() != entry.shape.as_slice() {
                return Err(Error::ConfigMismatch(format!(
                    "{}: shape {:?} differs from the index {:?}",
                    entry.file,
                    t.shape(),
                    entry.shape
                )));
            }
            store.add(entry.name.clone(), t);
        }
        model.params_mut().load_from(&store)?;
        Ok(model)
    }
}
