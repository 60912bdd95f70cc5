use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::PossibleValuesParser;
use clap::{Args, Parser, Subcommand};
use multirater::commands;
use multirater::{CliError, ExperimentConfig};

/// Multi-rater consensus learning on synthetic grading data.
#[derive(Debug, Parser)]
#[command(name = "multirater", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat `key = value` config file; flags override it.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Run seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Override any config key, e.g. `--set lr=1e-3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

const ARMS: [&str; 5] = ["baseline", "multibr", "conloss", "uncerty", "full"];

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a graded dataset and write train/val/test CSVs plus a manifest.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Number of samples.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Train one ablation arm on a generated dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Directory holding train.csv and val.csv.
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_parser = PossibleValuesParser::new(ARMS))]
        ablation: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate a checkpoint on a dataset file.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        /// Dataset CSV to evaluate.
        #[arg(long, value_name = "FILE", required_unless_present = "data")]
        dataset: Option<PathBuf>,
        /// Directory whose test.csv is evaluated.
        #[arg(long, value_name = "DIR", conflicts_with = "dataset")]
        data: Option<PathBuf>,
    },
    /// Run every ablation arm over several seeds and tabulate mean ± sd.
    Ablation {
        #[command(flatten)]
        common: Common,
        /// Seeds per arm.
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
    },
}

/// Base config (defaults, or a dataset's manifest), then the config file,
/// then `--set` pairs, then dedicated flags.
fn resolve(
    common: &Common,
    base: ExperimentConfig,
    extra: &[(&str, Option<String>)],
) -> Result<ExperimentConfig, CliError> {
    let mut cfg = base;
    if let Some(p) = &common.config {
        let text = std::fs::read_to_string(p)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
        cfg.apply_text(&text)?;
    }
    let mut pairs: Vec<(String, String)> = Vec::new();
    for s in &common.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{s}`")))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(seed) = common.seed {
        pairs.push(("seed".into(), seed.to_string()));
    }
    for (k, v) in extra {
        if let Some(v) = v {
            pairs.push((k.to_string(), v.clone()));
        }
    }
    cfg.set_all(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let s = |v: Option<usize>| v.map(|x| x.to_string());
    match cli.command {
        Command::Generate { common, n } => {
            let cfg = resolve(&common, ExperimentConfig::default(), &[("n_samples", s(n))])?;
            let m = commands::generate(&cfg, &common.out)?;
            let p = m.proportions;
            println!(
                "generated {} samples (train {}, val {}, test {}); CG {:.3} CN {:.3} NG {:.3} NN {:.3}",
                m.counts.total, m.counts.train, m.counts.val, m.counts.test, p[0], p[1], p[2], p[3]
            );
        }
        Command::Train {
            common,
            data,
            ablation,
            epochs,
        } => {
            let base = commands::dataset_config(&data)?;
            let cfg = resolve(
                &common,
                base,
                &[("ablation", ablation), ("epochs", s(epochs))],
            )?;
            let out = commands::train(&cfg, &data, &common.out)?;
            println!(
                "trained {} (best epoch {:?}); checkpoint {}",
                cfg.ablation,
                out.best_epoch,
                out.checkpoint.display()
            );
        }
        Command::Eval {
            common,
            checkpoint,
            dataset,
            data,
        } => {
            let cfg = resolve(&common, ExperimentConfig::default(), &[])?;
            let dataset = match (dataset, data) {
                (Some(f), _) => f,
                (None, Some(d)) => d.join("test.csv"),
                (None, None) => unreachable!("clap requires one of them"),
            };
            commands::eval(&cfg, &checkpoint, &dataset, &common.out)?;
            print!(
                "{}",
                std::fs::read_to_string(common.out.join("report.txt"))?
            );
        }
        Command::Ablation {
            common,
            seeds,
            epochs,
            n,
        } => {
            let cfg = resolve(
                &common,
                ExperimentConfig::default(),
                &[
                    ("seeds", s(seeds)),
                    ("epochs", s(epochs)),
                    ("n_samples", s(n)),
                ],
            )?;
            let grid = commands::ablation(&cfg, &common.out)?;
            print!(
                "{}",
                std::fs::read_to_string(common.out.join("ablation.txt"))?
            );
            if let Some(bad) = grid.rows.iter().find(|r| r.failed) {
                return Err(anyhow::anyhow!("arm {} failed", bad.arm).into());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            e.exit_code()
        }
    }
}
