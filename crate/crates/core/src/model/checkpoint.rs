//! JSON checkpoint container.
//!
//! ```text
//! {
//!   "format": "goaldyn-checkpoint/1",
//!   "training": TrainingConfig,
//!   "variant": { "goal_shift": bool, "stable_dynamics": bool },
//!   "dynamics": DynamicsConfig,
//!   "dims": ModelDims,
//!   "epochs_completed": int,
//!   "loss_history": [f64],
//!   "tensors": { "<name>": { "shape": [rows, cols], "values": [row-major f64] } },
//!   "adam": { "step": int,
//!             "m": { "<name>": {shape, values} }, "v": { "<name>": {shape, values} } }
//! }
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ModelDims, ModelParams};
use super::tensor::Tensor;
use super::train::{AdamState, Trainer, TrainingConfig, Variant};
use crate::dynamics::DynamicsConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "goaldyn-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedTensor {
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdamRecord {
    step: u64,
    m: BTreeMap<String, NamedTensor>,
    v: BTreeMap<String, NamedTensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub training: TrainingConfig,
    pub variant: Variant,
    pub dynamics: DynamicsConfig,
    pub dims: ModelDims,
    pub epochs_completed: usize,
    pub loss_history: Vec<f64>,
    pub tensors: BTreeMap<String, NamedTensor>,
    adam: AdamRecord,
}

fn to_map(names: &[String], tensors: &[&Tensor]) -> BTreeMap<String, NamedTensor> {
    names
        .iter()
        .zip(tensors)
        .map(|(n, t)| {
            (
                n.clone(),
                NamedTensor {
                    shape: [t.rows(), t.cols()],
                    values: t.data().to_vec(),
                },
            )
        })
        .collect()
}

fn take(map: &BTreeMap<String, NamedTensor>, name: &str, like: &Tensor) -> Result<Tensor> {
    let entry = map
        .get(name)
        .ok_or_else(|| Error::Config(format!("checkpoint is missing tensor `{name}`")))?;
    if entry.shape != [like.rows(), like.cols()] {
        return Err(Error::shape(format!(
            "checkpoint tensor `{name}` has shape {:?}, model expects {:?}",
            entry.shape,
            like.shape()
        )));
    }
    Tensor::from_vec(entry.shape[0], entry.shape[1], entry.values.clone())
}

impl Checkpoint {
    pub fn from_trainer(trainer: &Trainer) -> Self {
        let names: Vec<String> = trainer.params.named_tensors().into_iter().map(|(n, _)| n).collect();
        let m: Vec<&Tensor> = trainer.adam.m.iter().collect();
        let v: Vec<&Tensor> = trainer.adam.v.iter().collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            training: trainer.config,
            variant: trainer.variant,
            dynamics: trainer.dynamics,
            dims: trainer.params.dims,
            epochs_completed: trainer.epochs_completed,
            loss_history: trainer.loss_history.clone(),
            tensors: to_map(&names, &trainer.params.tensors()),
            adam: AdamRecord {
                step: trainer.adam.step,
                m: to_map(&names, &m),
                v: to_map(&names, &v),
            },
        }
    }

    pub fn into_trainer(self) -> Result<Trainer> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!(
                "unsupported checkpoint format `{}`",
                self.format
            )));
        }
        if self.dims.head != self.variant.head() {
            return Err(Error::Config("checkpoint head does not match its variant".into()));
        }
        // shapes come from a freshly initialised model of the recorded dims
        let mut params = ModelParams::init(self.dims, 0)?;
        let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
        let mut m = Vec::with_capacity(names.len());
        let mut v = Vec::with_capacity(names.len());
        for (name, slot) in names.iter().zip(params.tensors_mut()) {
            let loaded = take(&self.tensors, name, slot)?;
            m.push(take(&self.adam.m, name, slot)?);
            v.push(take(&self.adam.v, name, slot)?);
            *slot = loaded;
        }
        if !params.is_finite() {
            return Err(Error::Numeric("checkpoint contains non-finite weights".into()));
        }
        Ok(Trainer {
            params,
            config: self.training,
            variant: self.variant,
            dynamics: self.dynamics,
            adam: AdamState {
                step: self.adam.step,
                m,
                v,
            },
            epochs_completed: self.epochs_completed,
            loss_history: self.loss_history,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
