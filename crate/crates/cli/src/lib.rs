//! File formats and commands for the `multirater` experiment runner.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod report;

use std::path::Path;

use anyhow::Context;

pub use config::ExperimentConfig;
pub use error::CliError;

/// Pretty JSON plus a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
