//! Data preparation and training runs shared by the commands and the
//! acceptance suite.

use multirater_core::label_engine::{assign_soft_labels, compute_rater_weights, RaterWeights};
use multirater_core::metrics::{evaluate, EvalReport};
use multirater_core::rater_sim::{simulate, split_dataset, DatasetSplit, LabeledSample, Panel};
use multirater_core::trainer::{fit, Arm, EpochLog, FitOutcome};
use rayon::prelude::*;

use crate::config::ExperimentConfig;

/// A generated and split dataset with soft labels from training-split
/// rater weights.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub split: DatasetSplit,
    pub weights: RaterWeights,
}

pub fn prepare(config: &ExperimentConfig) -> multirater_core::Result<Prepared> {
    let panel = config.panel()?;
    let data = simulate(&config.generator()?, &panel)?;
    let mut split = split_dataset(&data, config.split_ratios()?, config.seed)?;
    let weights = soft_label_weights(&split.train, &panel);
    for part in [&mut split.train, &mut split.val, &mut split.test] {
        assign_soft_labels(part, &weights)?;
    }
    Ok(Prepared { split, weights })
}

pub fn soft_label_weights(train: &[LabeledSample], panel: &Panel) -> RaterWeights {
    let ids: Vec<u8> = panel.raters().map(|r| r.id).collect();
    compute_rater_weights(train.iter().map(|s| &s.record), &ids)
}

pub fn train(
    config: &ExperimentConfig,
    arm: Arm,
    train: &[LabeledSample],
    val: &[LabeledSample],
    on_epoch: impl FnMut(&EpochLog),
) -> multirater_core::Result<FitOutcome> {
    let dim = train
        .first()
        .map_or(config.feature_dim, |s| s.sample.features.len());
    fit(
        train,
        val,
        &config.model_config(dim),
        &config.train_config(arm),
        on_epoch,
    )
}

#[derive(Debug, Clone)]
pub struct Run {
    pub arm: Arm,
    pub seed: u64,
    pub best_epoch: Option<usize>,
    pub report: EvalReport,
}

/// Config for one seed of a multi-seed experiment.
pub fn with_seed(config: &ExperimentConfig, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        seed,
        ..config.clone()
    }
}

/// Trains and tests every arm on every seed. Each seed gets its own dataset
/// shared by all arms. Results come back in `arms × seeds` order; a failed
/// run carries its error message.
pub fn run_grid(
    config: &ExperimentConfig,
    arms: &[Arm],
    seeds: &[u64],
) -> Vec<Result<Run, String>> {
    let prepared: Vec<Result<Prepared, String>> = seeds
        .par_iter()
        .map(|&s| prepare(&with_seed(config, s)).map_err(|e| e.to_string()))
        .collect();
    let jobs: Vec<(Arm, usize)> = arms
        .iter()
        .flat_map(|&a| (0..seeds.len()).map(move |k| (a, k)))
        .collect();
    jobs.par_iter()
        .map(|&(arm, k)| {
            let seed = seeds[k];
            let data = prepared[k].as_ref().map_err(Clone::clone)?;
            let cfg = with_seed(config, seed);
            let out = train(&cfg, arm, &data.split.train, &data.split.val, |_| {})
                .map_err(|e| e.to_string())?;
            if let Some(e) = out.aborted {
                return Err(format!("{} seed {seed}: {e}", arm.name()));
            }
            let report = evaluate(&out.params, &data.split.test, config.threshold)
                .map_err(|e| e.to_string())?;
            log::info!(
                "{} seed {seed} done (best epoch {:?})",
                arm.name(),
                out.best_epoch
            );
            Ok(Run {
                arm,
                seed,
                best_epoch: out.best_epoch,
                report,
            })
        })
        .collect()
}
