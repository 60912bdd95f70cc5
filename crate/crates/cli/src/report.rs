//! JSON and aligned-text renderings of evaluation reports and ablation grids.

use multirater_core::metrics::{BranchKind, EvalReport, Metrics, Stratum};
use multirater_core::trainer::Arm;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsJson {
    pub acc: f64,
    pub sen: f64,
    pub spec: f64,
    pub f1: f64,
    pub auc: Option<f64>,
    /// Names of ratios that had a zero denominator and were reported as 0.
    pub undefined: Vec<String>,
}

impl From<&Metrics> for MetricsJson {
    fn from(m: &Metrics) -> Self {
        let mut undefined = Vec::new();
        for (flag, name) in [
            (m.undefined.sen, "sen"),
            (m.undefined.spec, "spec"),
            (m.undefined.f1, "f1"),
        ] {
            if flag {
                undefined.push(name.to_string());
            }
        }
        if m.auc.is_none() {
            undefined.push("auc".to_string());
        }
        Self {
            acc: m.acc,
            sen: m.sen,
            spec: m.spec,
            f1: m.f1,
            auc: m.auc,
            undefined,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumJson {
    pub stratum: String,
    pub count: usize,
    pub mean_uncertainty: Option<f64>,
    /// Absent for an empty stratum.
    pub metrics: Option<MetricsJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchJson {
    pub branch: String,
    pub strata: Vec<StratumJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub format: String,
    pub seed: u64,
    pub arm: String,
    pub threshold: f64,
    pub topology: String,
    pub config: ExperimentConfig,
    pub branches: Vec<BranchJson>,
}

impl ReportJson {
    pub fn new(report: &EvalReport, config: &ExperimentConfig, seed: u64, arm: &str) -> Self {
        let branches = report
            .branches
            .iter()
            .map(|b| BranchJson {
                branch: b.branch.name().to_string(),
                strata: Stratum::ALL
                    .iter()
                    .enumerate()
                    .map(|(k, s)| StratumJson {
                        stratum: s.name().to_string(),
                        count: report.counts[k],
                        mean_uncertainty: report.mean_uncertainty[k],
                        metrics: b.get(*s).map(MetricsJson::from),
                    })
                    .collect(),
            })
            .collect();
        Self {
            format: "multirater-report".to_string(),
            seed,
            arm: arm.to_string(),
            threshold: report.threshold,
            topology: report.topology.name().to_string(),
            config: config.clone(),
            branches,
        }
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.2}", 100.0 * x))
}

fn branch_label(kind: BranchKind) -> &'static str {
    match kind {
        BranchKind::Fusion => "Fusion",
        BranchKind::Sen => "SenBr",
        BranchKind::Spec => "SpecBr",
    }
}

/// Sen / Spec / AUC per stratum, one row per branch (fusion first), in
/// percent.
pub fn eval_table(report: &EvalReport, config: &ExperimentConfig, seed: u64, arm: &str) -> String {
    const CELL: usize = 7;
    let group = 3 * CELL + 2;
    let mut out = format!(
        "# seed {seed}, arm {arm}, topology {}, threshold {}\n",
        report.topology.name(),
        report.threshold
    );
    out.push_str(&format!("{:<8}", "Branch"));
    for title in ["Consensus", "Non-Consensus", "All"] {
        out.push_str(&format!("|{title:^group$}"));
    }
    out.push('\n');
    out.push_str(&" ".repeat(8));
    for _ in 0..3 {
        out.push_str(&format!(
            "|{:>CELL$}{:>CELL$}{:>CELL$} ",
            "Sen", "Spec", "AUC"
        ));
    }
    out.push('\n');
    for kind in [BranchKind::Fusion, BranchKind::Sen, BranchKind::Spec] {
        if report.branch(kind).is_none() {
            continue;
        }
        out.push_str(&format!("{:<8}", branch_label(kind)));
        for s in Stratum::ALL {
            let m = report.metrics(kind, s);
            out.push_str(&format!(
                "|{:>CELL$}{:>CELL$}{:>CELL$} ",
                pct(m.map(|m| m.sen)),
                pct(m.map(|m| m.spec)),
                pct(m.and_then(|m| m.auc))
            ));
        }
        out.push('\n');
    }
    let mut out: String = out.lines().map(|l| format!("{}\n", l.trim_end())).collect();
    out.push('\n');
    let counts: Vec<String> = Stratum::ALL
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let u = report.mean_uncertainty[k].map_or("-".to_string(), |u| format!("{u:.4}"));
            format!("{} n={} mean_u={u}", s.name(), report.counts[k])
        })
        .collect();
    out.push_str(&counts.join("  "));
    out.push('\n');
    if let Some(m) = report.metrics(BranchKind::Fusion, Stratum::All) {
        out.push_str(&format!(
            "fusion all: acc {} f1 {}\n",
            pct(Some(m.acc)),
            pct(Some(m.f1))
        ));
    }
    out.push_str("\n# config\n");
    out.push_str(&config.to_flat());
    out
}

/// Pads every column to its widest cell; `bars` lists the column indices
/// preceded by a `|` separator.
fn align(rows: &[Vec<String>], bars: &[usize]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let width: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for r in rows {
        let mut line = String::new();
        for c in 0..cols {
            if c > 0 {
                line.push_str(if bars.contains(&c) { " | " } else { "  " });
            }
            let cell = r.get(c).map(String::as_str).unwrap_or("");
            if c == 0 {
                line.push_str(&format!("{cell:<w$}", w = width[c]));
            } else {
                line.push_str(&format!("{cell:>w$}", w = width[c]));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// Row title matching the ablation table.
pub fn arm_title(arm: Arm) -> &'static str {
    match arm {
        Arm::Baseline => "Baseline",
        Arm::MultiBr => "MultiBr",
        Arm::ConLoss => "MultiBr + ConLoss",
        Arm::Uncerty => "MultiBr + Uncerty",
        Arm::Full => "MultiBr + ConLoss + Uncerty",
    }
}

pub const GRID_METRICS: [&str; 5] = ["acc", "sen", "spec", "f1", "auc"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub sd: f64,
}

impl MeanSd {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, sd })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunJson {
    pub seed: u64,
    pub best_epoch: Option<usize>,
    pub report: Option<ReportJson>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub arm: String,
    pub title: String,
    pub failed: bool,
    /// Fusion branch, all data; keyed like [`GRID_METRICS`].
    pub acc: Option<MeanSd>,
    pub sen: Option<MeanSd>,
    pub spec: Option<MeanSd>,
    pub f1: Option<MeanSd>,
    pub auc: Option<MeanSd>,
    pub runs: Vec<RunJson>,
}

impl GridRow {
    pub fn metric(&self, name: &str) -> Option<MeanSd> {
        match name {
            "acc" => self.acc,
            "sen" => self.sen,
            "spec" => self.spec,
            "f1" => self.f1,
            "auc" => self.auc,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridJson {
    pub format: String,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub config: ExperimentConfig,
    pub rows: Vec<GridRow>,
}

pub fn grid_table(grid: &GridJson) -> String {
    let mut rows = vec![vec![
        "Methods".to_string(),
        "Acc".into(),
        "Sen".into(),
        "Spec".into(),
        "F1".into(),
        "AUC".into(),
    ]];
    for r in &grid.rows {
        let mut row = vec![r.title.clone()];
        for name in GRID_METRICS {
            row.push(match (r.failed, r.metric(name)) {
                (true, _) => "failed".to_string(),
                (false, Some(m)) => format!("{:.2} ± {:.2}", 100.0 * m.mean, 100.0 * m.sd),
                (false, None) => "-".to_string(),
            });
        }
        rows.push(row);
    }
    let mut out = format!(
        "# fusion branch, all test data, mean ± sd over seeds {:?} (%)\n",
        grid.seeds
    );
    out.push_str(&align(&rows, &[1]));
    out.push_str("\n# config\n");
    out.push_str(&grid.config.to_flat());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_sd() {
        let m = MeanSd::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.mean, 2.0);
        assert_eq!(m.sd, 1.0);
        assert_eq!(MeanSd::of(&[4.0]).unwrap().sd, 0.0);
        assert!(MeanSd::of(&[]).is_none());
    }

    #[test]
    fn align_pads_columns() {
        let rows = vec![
            vec!["a".to_string(), "1".into()],
            vec!["long".into(), "22".into()],
        ];
        assert_eq!(align(&rows, &[1]), "a    |  1\nlong | 22\n");
    }
}
