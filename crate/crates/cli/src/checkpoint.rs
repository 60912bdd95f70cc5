//! Checkpoint file: one JSON document.
//!
//! ```text
//! { "format": "multirater-checkpoint", "version": 1,
//!   "seed": .., "arm": "full", "config": { ..resolved config.. },
//!   "model": { "input_dim": 16, "trunk_dims": [64,64,64], "branch_dim": 32,
//!              "topology": "three_branch" },
//!   "best_epoch": 12, "val_auc": 0.97,
//!   "tensors": [ { "name": "trunk.0.weight", "shape": [64, 16], "values": [..] }, .. ] }
//! ```
//!
//! Tensors follow [`ModelParams::tensors`] order with row-major values.
//! Floats use shortest round-trip formatting, so loading is exact.

use std::path::Path;

use anyhow::{bail, Context};
use multirater_core::model::{ModelConfig, ModelParams, Topology};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

pub const FORMAT: &str = "multirater-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelShape {
    pub input_dim: usize,
    pub trunk_dims: Vec<usize>,
    pub branch_dim: usize,
    pub topology: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub arm: String,
    pub config: ExperimentConfig,
    pub model: ModelShape,
    pub best_epoch: Option<usize>,
    pub val_auc: Option<f64>,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn new(
        params: &ModelParams,
        config: &ExperimentConfig,
        best_epoch: Option<usize>,
        val_auc: Option<f64>,
    ) -> Self {
        let m = params.config();
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            seed: config.seed,
            arm: config.ablation.clone(),
            config: config.clone(),
            model: ModelShape {
                input_dim: m.input_dim,
                trunk_dims: m.trunk_dims.clone(),
                branch_dim: m.branch_dim,
                topology: m.topology.name().to_string(),
            },
            best_epoch,
            val_auc,
            tensors: params
                .tensors()
                .into_iter()
                .map(|t| Tensor {
                    name: t.name,
                    shape: t.shape,
                    values: t.values.to_vec(),
                })
                .collect(),
        }
    }

    pub fn params(&self) -> anyhow::Result<ModelParams> {
        if self.format != FORMAT || self.version != VERSION {
            bail!("not a version {VERSION} {FORMAT} file");
        }
        let topology = Topology::from_name(&self.model.topology)
            .with_context(|| format!("unknown topology `{}`", self.model.topology))?;
        let cfg = ModelConfig {
            input_dim: self.model.input_dim,
            trunk_dims: self.model.trunk_dims.clone(),
            branch_dim: self.model.branch_dim,
            seed: self.seed,
            topology,
        };
        Ok(ModelParams::from_tensors(
            &cfg,
            self.tensors
                .iter()
                .map(|t| (t.name.as_str(), t.shape.as_slice(), t.values.as_slice())),
        )?)
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        crate::write_json(path, self)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_round_trip() {
        let cfg = ExperimentConfig {
            trunk_dims: vec![5, 4],
            branch_dim: 3,
            ..Default::default()
        };
        let params = ModelParams::new(&cfg.model_config(6)).unwrap();
        let ck = Checkpoint::new(&params, &cfg, Some(3), Some(0.75));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        ck.save(&p).unwrap();
        let back = Checkpoint::load(&p).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.params().unwrap(), params);
    }
}
