//! The four verbs. Each writes its artifacts under an output directory and
//! embeds the resolved config and seed in every file.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use multirater_core::metrics::{evaluate, BranchKind, Stratum};
use multirater_core::rater_sim::CategoryCounts;
use multirater_core::trainer::{Arm, EpochLog};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::ExperimentConfig;
use crate::dataset::{read_csv, write_csv};
use crate::error::CliError;
use crate::experiment::{self, prepare};
use crate::report::{
    arm_title, eval_table, grid_table, GridJson, GridRow, MeanSd, ReportJson, RunJson,
};
use crate::write_json;

/// Consensus-category counts of the reference dataset:
/// consensus+, consensus−, non-consensus+, non-consensus−.
pub const TARGET_COUNTS: [usize; 4] = [2171, 2315, 781, 1051];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Categories {
    pub consensus_positive: usize,
    pub consensus_negative: usize,
    pub non_consensus_positive: usize,
    pub non_consensus_negative: usize,
}

impl From<CategoryCounts> for Categories {
    fn from(c: CategoryCounts) -> Self {
        Self {
            consensus_positive: c.consensus_positive,
            consensus_negative: c.consensus_negative,
            non_consensus_positive: c.non_consensus_positive,
            non_consensus_negative: c.non_consensus_negative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub feature_dim: usize,
    pub files: Vec<String>,
    pub counts: SplitCounts,
    pub categories: Categories,
    /// Same order as `categories`.
    pub proportions: [f64; 4],
    pub target_proportions: [f64; 4],
    /// Rater weights from the training split, used for the soft labels.
    pub rater_weights: Vec<(u8, f64)>,
}

fn create_dir(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    Ok(())
}

pub fn generate(config: &ExperimentConfig, out: &Path) -> Result<Manifest, CliError> {
    config.validate()?;
    create_dir(out)?;
    let prepared = prepare(config)?;
    let split = &prepared.split;
    let dim = config.feature_dim;
    for (name, part) in [
        ("train.csv", &split.train),
        ("val.csv", &split.val),
        ("test.csv", &split.test),
    ] {
        write_csv(&out.join(name), part, dim)?;
    }
    let all = split.train.iter().chain(&split.val).chain(&split.test);
    let counts = CategoryCounts::tally(all.map(|s| &s.record));
    let total: usize = TARGET_COUNTS.iter().sum();
    let manifest = Manifest {
        format: "multirater-dataset".to_string(),
        seed: config.seed,
        config: config.clone(),
        feature_dim: dim,
        files: vec!["train.csv".into(), "val.csv".into(), "test.csv".into()],
        counts: SplitCounts {
            train: split.train.len(),
            val: split.val.len(),
            test: split.test.len(),
            total: counts.total(),
        },
        categories: counts.into(),
        proportions: counts.proportions(),
        target_proportions: TARGET_COUNTS.map(|c| c as f64 / total as f64),
        rater_weights: prepared.weights.iter().collect(),
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    log::info!("wrote {} samples to {}", counts.total(), out.display());
    Ok(manifest)
}

/// The generation config recorded in `dir/manifest.json`, or the defaults
/// when there is no manifest.
pub fn dataset_config(dir: &Path) -> Result<ExperimentConfig, CliError> {
    let path = dir.join("manifest.json");
    if !path.exists() {
        return Ok(ExperimentConfig::default());
    }
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let m: Manifest =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(m.config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss_sen: Option<f64>,
    pub loss_spec: Option<f64>,
    pub loss_fusion: f64,
    pub loss_consensus: Option<f64>,
    pub val_auc: Option<f64>,
    pub seed: u64,
    pub arm: String,
}

impl LogRecord {
    fn new(e: &EpochLog, seed: u64, arm: Arm) -> Self {
        Self {
            epoch: e.epoch,
            lr: e.lr,
            loss_sen: e.loss_sen,
            loss_spec: e.loss_spec,
            loss_fusion: e.loss_fusion,
            loss_consensus: e.loss_consensus,
            val_auc: e.val_auc,
            seed,
            arm: arm.name().to_string(),
        }
    }
}

/// Output paths of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutputs {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub config: PathBuf,
    pub best_epoch: Option<usize>,
}

pub fn train(config: &ExperimentConfig, data: &Path, out: &Path) -> Result<TrainOutputs, CliError> {
    config.validate()?;
    let arm = config.arm()?;
    let train_set = read_csv(&data.join("train.csv"))?;
    let val_path = data.join("val.csv");
    let val_set = if val_path.exists() {
        read_csv(&val_path)?
    } else {
        Vec::new()
    };
    if train_set.is_empty() {
        return Err(anyhow!("{} has no rows", data.join("train.csv").display()).into());
    }
    create_dir(out)?;
    let paths = TrainOutputs {
        checkpoint: out.join("checkpoint.json"),
        log: out.join("train_log.jsonl"),
        config: out.join("config.json"),
        best_epoch: None,
    };
    write_json(&paths.config, config)?;

    // One line per epoch, flushed as it lands, so an interrupted run
    // leaves a readable prefix.
    let mut log_file = BufWriter::new(
        File::create(&paths.log).with_context(|| format!("creating {}", paths.log.display()))?,
    );
    let mut io_error = None;
    let outcome = experiment::train(config, arm, &train_set, &val_set, |e| {
        if io_error.is_some() {
            return;
        }
        let line = serde_json::to_string(&LogRecord::new(e, config.seed, arm))
            .expect("log record serializes");
        let res = writeln!(log_file, "{line}").and_then(|_| log_file.flush());
        if let Err(err) = res {
            io_error = Some(err);
        }
        log::info!(
            "epoch {} lr {:.2e} fusion loss {:.5} val auc {:?}",
            e.epoch,
            e.lr,
            e.loss_fusion,
            e.val_auc
        );
    })?;
    if let Some(e) = io_error {
        return Err(anyhow!(e)
            .context(format!("writing {}", paths.log.display()))
            .into());
    }
    let val_auc = outcome.best_epoch.and_then(|b| outcome.log[b].val_auc);
    Checkpoint::new(&outcome.params, config, outcome.best_epoch, val_auc)
        .save(&paths.checkpoint)?;
    if let Some(e) = outcome.aborted {
        return Err(anyhow!("training diverged: {e}").into());
    }
    Ok(TrainOutputs {
        best_epoch: outcome.best_epoch,
        ..paths
    })
}

pub fn eval(
    config: &ExperimentConfig,
    checkpoint: &Path,
    dataset: &Path,
    out: &Path,
) -> Result<ReportJson, CliError> {
    config.validate()?;
    let ck = Checkpoint::load(checkpoint)?;
    let params = ck.params()?;
    let blank = fs::read_to_string(dataset)
        .map(|t| t.trim().is_empty())
        .unwrap_or(false);
    let data = if blank {
        Vec::new()
    } else {
        read_csv(dataset)?
    };
    if data.is_empty() {
        return Err(CliError::Usage(format!(
            "{} has no rows to evaluate",
            dataset.display()
        )));
    }
    let dim = data[0].sample.features.len();
    if dim != params.config().input_dim {
        return Err(anyhow!(
            "checkpoint expects {} features but {} has {dim}",
            params.config().input_dim,
            dataset.display()
        )
        .into());
    }
    let report = evaluate(&params, &data, config.threshold)?;
    create_dir(out)?;
    let json = ReportJson::new(&report, &ck.config, ck.seed, &ck.arm);
    write_json(&out.join("report.json"), &json)?;
    fs::write(
        out.join("report.txt"),
        eval_table(&report, &ck.config, ck.seed, &ck.arm),
    )
    .with_context(|| format!("writing {}", out.join("report.txt").display()))?;
    Ok(json)
}

/// Runs all five arms over `config.seeds` seeds starting at `config.seed`.
/// Returns the grid even when an arm failed; the caller decides the exit
/// code from [`GridRow::failed`].
pub fn ablation(config: &ExperimentConfig, out: &Path) -> Result<GridJson, CliError> {
    config.validate()?;
    create_dir(out)?;
    let seeds: Vec<u64> = (0..config.seeds as u64).map(|k| config.seed + k).collect();
    let runs = experiment::run_grid(config, &Arm::ALL, &seeds);
    let mut rows = Vec::new();
    for (i, arm) in Arm::ALL.into_iter().enumerate() {
        let chunk = &runs[i * seeds.len()..(i + 1) * seeds.len()];
        let mut values: [Vec<f64>; 5] = Default::default();
        let mut run_json = Vec::new();
        for (k, r) in chunk.iter().enumerate() {
            match r {
                Ok(run) => {
                    if let Some(m) = run.report.metrics(BranchKind::Fusion, Stratum::All) {
                        let v = [Some(m.acc), Some(m.sen), Some(m.spec), Some(m.f1), m.auc];
                        for (slot, x) in values.iter_mut().zip(v) {
                            slot.extend(x);
                        }
                    }
                    let cfg = experiment::with_seed(config, run.seed);
                    run_json.push(RunJson {
                        seed: run.seed,
                        best_epoch: run.best_epoch,
                        report: Some(ReportJson::new(&run.report, &cfg, run.seed, arm.name())),
                        error: None,
                    });
                }
                Err(e) => {
                    log::error!("{} seed {} failed: {e}", arm.name(), seeds[k]);
                    run_json.push(RunJson {
                        seed: seeds[k],
                        best_epoch: None,
                        report: None,
                        error: Some(e.clone()),
                    });
                }
            }
        }
        let failed = chunk.iter().any(Result::is_err);
        let [acc, sen, spec, f1, auc] = values.map(|v| MeanSd::of(&v));
        rows.push(GridRow {
            arm: arm.name().to_string(),
            title: arm_title(arm).to_string(),
            failed,
            acc,
            sen,
            spec,
            f1,
            auc,
            runs: run_json,
        });
    }
    let grid = GridJson {
        format: "multirater-ablation".to_string(),
        seed: config.seed,
        seeds,
        config: config.clone(),
        rows,
    };
    write_json(&out.join("ablation.json"), &grid)?;
    fs::write(out.join("ablation.txt"), grid_table(&grid))
        .with_context(|| format!("writing {}", out.join("ablation.txt").display()))?;
    Ok(grid)
}
