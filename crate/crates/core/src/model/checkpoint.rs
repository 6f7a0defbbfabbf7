use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, SdeModel};

pub const CHECKPOINT_FORMAT: &str = "nsde-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub params: Vec<Tensor>,
}

impl Checkpoint {
    pub fn from_model(model: &SdeModel) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: model.config.clone(),
            params: model.params().into_iter().cloned().collect(),
        }
    }

    pub fn into_model(self) -> Result<SdeModel> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::InvalidArgument(format!("not a checkpoint: format {:?}", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidArgument(format!("unsupported checkpoint version {}", self.version)));
        }
        let mut model = SdeModel::new(self.config)?;
        let slots = model.params_mut();
        if slots.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "checkpoint has {} tensors, model expects {}",
                self.params.len(),
                slots.len()
            )));
        }
        for (i, (slot, value)) in slots.into_iter().zip(self.params).enumerate() {
            if slot.shape() != value.shape() {
                return Err(Error::Shape(format!(
                    "parameter {i}: expected {:?}, found {:?}",
                    slot.shape(),
                    value.shape()
                )));
            }
            *slot = Tensor::new(value.shape().to_vec(), value.into_data())?;
        }
        Ok(model)
    }
}

pub fn save_checkpoint(model: &SdeModel, path: &Path) -> Result<()> {
    let json = serde_json::to_string(&Checkpoint::from_model(model))?;
    fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<SdeModel> {
    let text = fs::read_to_string(path)?;
    let ck: Checkpoint = serde_json::from_str(&text)?;
    ck.into_model()
}
