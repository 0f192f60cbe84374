use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CasformerConfig, CasformerError, CasformerModel};
use crate::autodiff::{ParamStore, Tensor};

pub const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredParam {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Serializable model weights. Optimizer moments are not kept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub config: CasformerConfig,
    pub params: Vec<StoredParam>,
}

impl Checkpoint {
    pub fn from_model(model: &CasformerModel) -> Self {
        let params = model
            .params()
            .iter()
            .map(|(_, name, t)| StoredParam { name: name.to_string(), shape: t.shape().to_vec(), data: t.data().to_vec() })
            .collect();
        Self { format: CHECKPOINT_FORMAT, config: *model.config(), params }
    }

    /// Rebuilds the model. `expected_domains`, if given, must match.
    pub fn into_model(self, expected_domains: Option<usize>) -> Result<CasformerModel, CasformerError> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(CasformerError::Checkpoint(format!("unsupported format {}", self.format)));
        }
        if let Some(n) = expected_domains {
            if n != self.config.num_domains {
                return Err(CasformerError::DomainCountMismatch { expected: self.config.num_domains, got: n });
            }
        }
        // Structure from a fresh model; values from the checkpoint.
        let mut model = CasformerModel::new(self.config, &mut ChaCha8Rng::seed_from_u64(0))?;
        if self.params.len() != model.params().len() {
            return Err(CasformerError::Checkpoint(format!(
                "expected {} tensors, found {}",
                model.params().len(),
                self.params.len()
            )));
        }
        let mut store = ParamStore::new();
        for ((_, name, template), stored) in model.params().iter().zip(&self.params) {
            if name != stored.name || template.shape() != stored.shape.as_slice() {
                return Err(CasformerError::Checkpoint(format!(
                    "tensor {} {:?} does not match {} {:?}",
                    stored.name,
                    stored.shape,
                    name,
                    template.shape()
                )));
            }
            let value = Tensor::new(stored.shape.clone(), stored.data.clone())
                .map_err(|e| CasformerError::Checkpoint(e.to_string()))?;
            store.add(name, value);
        }
        model.replace_params(store);
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), CasformerError> {
        let json = serde_json::to_string(self).map_err(|e| CasformerError::Checkpoint(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CasformerError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CasformerError::Checkpoint(e.to_string()))
    }
}

impl CasformerModel {
    pub fn save(&self, path: &Path) -> Result<(), CasformerError> {
        Checkpoint::from_model(self).save(path)
    }

    pub fn load(path: &Path, expected_domains: Option<usize>) -> Result<Self, CasformerError> {
        Checkpoint::load(path)?.into_model(expected_domains)
    }
}
