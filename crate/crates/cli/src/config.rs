//! Experiment configuration: every tunable in one flat record.
//!
//! Files hold `key = value` lines; `#` starts a comment. Values parse as
//! JSON scalars when possible, otherwise as strings. `trunk_dims` also
//! accepts a comma list such as `64,64,64`.

use std::path::Path;

use multirater_core::losses::LossConfig;
use multirater_core::model::ModelConfig;
use multirater_core::rater_sim::{GeneratorConfig, Geometry, Panel, RaterProfile, SplitRatios};
use multirater_core::trainer::{Arm, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,

    pub n_samples: usize,
    pub feature_dim: usize,
    pub class_balance: f64,
    pub difficulty_mix: f64,
    pub easy_center: f64,
    pub easy_floor: f64,
    pub hard_center: f64,
    pub hard_spread: f64,
    pub tau: f64,
    pub kappa: f64,
    pub rater0_sensitivity: f64,
    pub rater0_specificity: f64,
    pub rater1_sensitivity: f64,
    pub rater1_specificity: f64,
    pub adjudicator_sensitivity: f64,
    pub adjudicator_specificity: f64,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,

    pub trunk_dims: Vec<usize>,
    pub branch_dim: usize,

    pub ablation: String,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub lr_halving_period: usize,
    pub alpha: f64,
    pub margin: f64,

    pub threshold: f64,
    /// Seeds per arm in the ablation grid.
    pub seeds: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let g = GeneratorConfig::default();
        let geo = g.geometry;
        let panel = Panel::default();
        let [r0, r1] = *panel.stage_one();
        let adj = *panel.adjudicator();
        let split = SplitRatios::default();
        let m = ModelConfig::new(g.feature_dim);
        let t = TrainConfig::default();
        Self {
            seed: 0,
            n_samples: g.n_samples,
            feature_dim: g.feature_dim,
            class_balance: g.class_balance,
            difficulty_mix: g.difficulty_mix,
            easy_center: geo.easy_center,
            easy_floor: geo.easy_floor,
            hard_center: geo.hard_center,
            hard_spread: geo.hard_spread,
            tau: geo.tau,
            kappa: panel.kappa,
            rater0_sensitivity: r0.sensitivity,
            rater0_specificity: r0.specificity,
            rater1_sensitivity: r1.sensitivity,
            rater1_specificity: r1.specificity,
            adjudicator_sensitivity: adj.sensitivity,
            adjudicator_specificity: adj.specificity,
            train_fraction: split.train,
            val_fraction: split.val,
            test_fraction: split.test,
            trunk_dims: m.trunk_dims,
            branch_dim: m.branch_dim,
            ablation: Arm::Full.name().to_string(),
            batch_size: t.batch_size,
            epochs: t.max_epochs,
            lr: t.lr,
            lr_halving_period: t.lr_halving_period,
            alpha: t.loss.alpha,
            margin: t.loss.margin,
            threshold: 0.5,
            seeds: 5,
        }
    }
}

impl ExperimentConfig {
    /// Reads a `key = value` file over the defaults.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "config line {}: expected key = value",
                    lineno + 1
                )));
            };
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        self.set_all(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))
    }

    /// Applies textual overrides in order.
    pub fn set_all<'a>(
        &mut self,
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<(), CliError> {
        let Value::Object(mut map) = serde_json::to_value(&*self).expect("config serializes")
        else {
            unreachable!("config is a struct")
        };
        for (k, v) in pairs {
            let Some(slot) = map.get_mut(k) else {
                return Err(CliError::Usage(format!("unknown config key `{k}`")));
            };
            *slot = parse_value(k, v);
        }
        *self = serde_json::from_value(Value::Object(map))
            .map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
        self.validate()
    }

    /// `key = value` lines in field order.
    pub fn to_flat(&self) -> String {
        let Value::Object(map) = serde_json::to_value(self).expect("config serializes") else {
            unreachable!()
        };
        flat_lines(&map)
    }

    pub fn arm(&self) -> Result<Arm, CliError> {
        Arm::from_name(&self.ablation).ok_or_else(|| {
            CliError::Usage(format!(
                "unknown ablation `{}` (expected baseline, multibr, conloss, uncerty or full)",
                self.ablation
            ))
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: &str| Err(CliError::Usage(m.to_string()));
        if self.n_samples == 0 {
            return usage("n_samples must be >= 1");
        }
        if self.feature_dim == 0 {
            return usage("feature_dim must be >= 1");
        }
        if self.seeds == 0 {
            return usage("seeds must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return usage("threshold must lie in [0, 1]");
        }
        self.arm()?;
        self.generator().map_err(core_usage)?;
        self.panel().map_err(core_usage)?;
        self.split_ratios().map_err(core_usage)?;
        self.model_config(self.feature_dim)
            .validate()
            .map_err(core_usage)?;
        self.train_config(self.arm()?)
            .validate()
            .map_err(core_usage)?;
        Ok(())
    }

    pub fn generator(&self) -> multirater_core::Result<GeneratorConfig> {
        let g = GeneratorConfig {
            n_samples: self.n_samples,
            feature_dim: self.feature_dim,
            class_balance: self.class_balance,
            difficulty_mix: self.difficulty_mix,
            seed: self.seed,
            geometry: Geometry {
                easy_center: self.easy_center,
                easy_floor: self.easy_floor,
                hard_center: self.hard_center,
                hard_spread: self.hard_spread,
                tau: self.tau,
            },
        };
        // Parameter checks live in the generator; a one-sample dry run
        // surfaces them without drawing the full set.
        multirater_core::rater_sim::generate_dataset(&GeneratorConfig {
            n_samples: 1,
            ..g.clone()
        })?;
        Ok(g)
    }

    pub fn panel(&self) -> multirater_core::Result<Panel> {
        Panel::new(
            &[
                RaterProfile::new(0, self.rater0_sensitivity, self.rater0_specificity)?,
                RaterProfile::new(1, self.rater1_sensitivity, self.rater1_specificity)?,
            ],
            RaterProfile::new(
                2,
                self.adjudicator_sensitivity,
                self.adjudicator_specificity,
            )?,
        )?
        .with_kappa(self.kappa)
    }

    pub fn split_ratios(&self) -> multirater_core::Result<SplitRatios> {
        SplitRatios::new(self.train_fraction, self.val_fraction, self.test_fraction)
    }

    pub fn model_config(&self, input_dim: usize) -> ModelConfig {
        ModelConfig {
            input_dim,
            trunk_dims: self.trunk_dims.clone(),
            branch_dim: self.branch_dim,
            seed: self.seed,
            ..ModelConfig::new(input_dim)
        }
    }

    pub fn train_config(&self, arm: Arm) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            max_epochs: self.epochs,
            lr: self.lr,
            lr_halving_period: self.lr_halving_period,
            loss: LossConfig {
                margin: self.margin,
                alpha: self.alpha,
            },
            seed: self.seed,
            ablation: arm.ablation(),
            ..TrainConfig::default()
        }
    }
}

fn core_usage(e: multirater_core::Error) -> CliError {
    CliError::Usage(format!("invalid config: {e}"))
}

fn parse_value(key: &str, v: &str) -> Value {
    if key == "trunk_dims" && !v.starts_with('[') {
        let items: Vec<Value> = v
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.to_string())))
            .collect();
        return Value::Array(items);
    }
    serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()))
}

fn flat_lines(map: &Map<String, Value>) -> String {
    let mut out = String::new();
    for (k, v) in map {
        let text = match v {
            Value::String(s) => s.clone(),
            Value::Array(items) => items
                .iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(","),
            other => other.to_string(),
        };
        out.push_str(&format!("{k} = {text}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_round_trip() {
        let mut c = ExperimentConfig::default();
        c.set_all([
            ("trunk_dims", "8, 4"),
            ("lr", "0.001"),
            ("ablation", "multibr"),
        ])
        .unwrap();
        assert_eq!(c.trunk_dims, vec![8, 4]);
        let mut d = ExperimentConfig::default();
        d.apply_text(&c.to_flat()).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn comments_and_blank_lines() {
        let mut c = ExperimentConfig::default();
        c.apply_text("# data\n\nn_samples = 100   # small\nseed=7\n")
            .unwrap();
        assert_eq!((c.n_samples, c.seed), (100, 7));
    }

    #[test]
    fn bad_input_is_a_usage_error() {
        let mut c = ExperimentConfig::default();
        for text in [
            "nope = 1",
            "n_samples = 0",
            "lr = fast",
            "ablation = all",
            "seed",
        ] {
            assert!(
                matches!(c.clone().apply_text(text), Err(CliError::Usage(_))),
                "{text}"
            );
        }
        assert!(c.set_all([("train_fraction", "0.9")]).is_err());
    }

    #[test]
    fn defaults_mirror_core() {
        let c = ExperimentConfig::default();
        assert_eq!(c.generator().unwrap(), GeneratorConfig::default());
        assert_eq!(c.panel().unwrap(), Panel::default());
        assert_eq!(c.train_config(Arm::Full), TrainConfig::default());
    }
}
