//! JSON checkpoints: the model shape plus every parameter tensor by name.
//! Floats are written in shortest round-trip form and parsed exactly, so a
//! save/load cycle reproduces every bit.

use std::path::Path;

use serde::{Deserialize, Serialize};
use spo_core::{ParamSet, Policy, PolicyConfig, Tensor};

use crate::dataset::{read_json, write_json};
use crate::{Error, Result};

pub const FORMAT: &str = "spo-checkpoint-1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRecord {
    pub grid_size: usize,
    pub num_blocks: usize,
    pub vocab_size: usize,
    pub word_dim: usize,
    pub action_dim: usize,
    pub lstm_hidden: usize,
    pub obs_hidden: usize,
    pub obs_dim: usize,
    pub trunk_hidden: usize,
    pub instruction_gate: bool,
    pub init_bound: f64,
}

impl From<&PolicyConfig> for ModelRecord {
    fn from(c: &PolicyConfig) -> Self {
        Self {
            grid_size: c.grid_size,
            num_blocks: c.num_blocks,
            vocab_size: c.vocab_size,
            word_dim: c.word_dim,
            action_dim: c.action_dim,
            lstm_hidden: c.lstm_hidden,
            obs_hidden: c.obs_hidden,
            obs_dim: c.obs_dim,
            trunk_hidden: c.trunk_hidden,
            instruction_gate: c.instruction_gate,
            init_bound: c.init_bound,
        }
    }
}

impl From<&ModelRecord> for PolicyConfig {
    fn from(m: &ModelRecord) -> Self {
        PolicyConfig {
            grid_size: m.grid_size,
            num_blocks: m.num_blocks,
            vocab_size: m.vocab_size,
            word_dim: m.word_dim,
            action_dim: m.action_dim,
            lstm_hidden: m.lstm_hidden,
            obs_hidden: m.obs_hidden,
            obs_dim: m.obs_dim,
            trunk_hidden: m.trunk_hidden,
            instruction_gate: m.instruction_gate,
            init_bound: m.init_bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub model: ModelRecord,
    pub params: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn from_policy(policy: &Policy) -> Result<Self> {
        if !policy.params().all_finite() {
            return Err(Error::Train("refusing to checkpoint non-finite parameters".into()));
        }
        Ok(Self {
            format: FORMAT.into(),
            model: ModelRecord::from(policy.config()),
            params: policy
                .params()
                .iter()
                .map(|(_, name, t)| ParamRecord {
                    name: name.into(),
                    shape: t.shape().to_vec(),
                    values: t.data().to_vec(),
                })
                .collect(),
        })
    }

    pub fn into_policy(self) -> Result<Policy> {
        if self.format != FORMAT {
            return Err(Error::Data(format!("unsupported checkpoint format `{}`", self.format)));
        }
        let mut params = ParamSet::new();
        for p in self.params {
            let tensor = Tensor::new(p.shape, p.values).map_err(|e| Error::Data(format!("parameter {}: {e}", p.name)))?;
            params.add(&p.name, tensor).map_err(|e| Error::Data(format!("parameter {}: {e}", p.name)))?;
        }
        Policy::from_params(PolicyConfig::from(&self.model), params).map_err(|e| Error::Mismatch(e.to_string()))
    }
}

pub fn save(policy: &Policy, path: &Path) -> Result<()> {
    write_json(&Checkpoint::from_policy(policy)?, path)
}

pub fn load(path: &Path) -> Result<Policy> {
    read_json::<Checkpoint>(path)?.into_policy()
}
