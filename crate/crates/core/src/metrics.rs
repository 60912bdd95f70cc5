//! Classification metrics, stratified by rater consensus.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::label::{Label, Probs};
use crate::losses::BranchOutputs;
use crate::model::{ModelParams, Topology};
use crate::rater_sim::LabeledSample;

/// Flags raised when a ratio had a zero denominator and was reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Undefined {
    pub sen: bool,
    pub spec: bool,
    pub f1: bool,
}

impl Undefined {
    pub fn any(&self) -> bool {
        self.sen || self.spec || self.f1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfusionMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub acc: f64,
    pub sen: f64,
    pub spec: f64,
    pub f1: f64,
    pub undefined: Undefined,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Acc, Sen = TP/(TP+FN), Spec = TN/(TN+FP), F1 = 2TP/(2TP+FP+FN).
pub fn confusion_metrics(predictions: &[Label], labels: &[Label]) -> Result<ConfusionMetrics> {
    if predictions.len() != labels.len() {
        return Err(Error::parameter(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::parameter(
            "confusion metrics need at least one sample",
        ));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (p, l) in predictions.iter().zip(labels) {
        match (p.is_positive(), l.is_positive()) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let (sen, sen_undef) = ratio(tp, tp + fn_);
    let (spec, spec_undef) = ratio(tn, tn + fp);
    let (f1, f1_undef) = ratio(2 * tp, 2 * tp + fp + fn_);
    Ok(ConfusionMetrics {
        tp,
        fp,
        tn,
        fn_,
        acc: (tp + tn) as f64 / labels.len() as f64,
        sen,
        spec,
        f1,
        undefined: Undefined {
            sen: sen_undef,
            spec: spec_undef,
            f1: f1_undef,
        },
    })
}

/// ROC AUC as the normalized Mann-Whitney U statistic; tied scores across
/// classes count one half.
pub fn roc_auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::parameter("scores and labels differ in length"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::parameter("NaN score"));
    }
    let n_pos = labels.iter().filter(|l| l.is_positive()).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(String::from(
            "AUC needs both classes present",
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of (1-based, tie-averaged) ranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_group = order[i..=j]
            .iter()
            .filter(|&&k| labels[k].is_positive())
            .count();
        rank_sum += avg_rank * pos_in_group as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stratum {
    Consensus,
    NonConsensus,
    All,
}

impl Stratum {
    pub const ALL: [Stratum; 3] = [Stratum::Consensus, Stratum::NonConsensus, Stratum::All];

    pub fn name(self) -> &'static str {
        match self {
            Stratum::Consensus => "consensus",
            Stratum::NonConsensus => "non_consensus",
            Stratum::All => "all",
        }
    }

    fn contains(self, consensus: bool) -> bool {
        match self {
            Stratum::Consensus => consensus,
            Stratum::NonConsensus => !consensus,
            Stratum::All => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchKind {
    Sen,
    Spec,
    Fusion,
}

impl BranchKind {
    pub fn name(self) -> &'static str {
        match self {
            BranchKind::Sen => "sen",
            BranchKind::Spec => "spec",
            BranchKind::Fusion => "fusion",
        }
    }

    pub fn select(self, o: &BranchOutputs) -> Probs {
        match self {
            BranchKind::Sen => o.y_sen,
            BranchKind::Spec => o.y_spec,
            BranchKind::Fusion => o.y_fusion,
        }
    }
}

/// Acc/Sen/Spec/F1/AUC on one stratum. `auc` is `None` when the stratum
/// holds a single class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub acc: f64,
    pub sen: f64,
    pub spec: f64,
    pub f1: f64,
    pub auc: Option<f64>,
    pub undefined: Undefined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchReport {
    pub branch: BranchKind,
    /// Indexed like [`Stratum::ALL`]; `None` for an empty stratum.
    pub strata: [Option<Metrics>; 3],
}

impl BranchReport {
    pub fn get(&self, stratum: Stratum) -> Option<&Metrics> {
        self.strata[stratum as usize].as_ref()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub threshold: f64,
    pub topology: Topology,
    /// Sample counts per stratum, indexed like [`Stratum::ALL`].
    pub counts: [usize; 3],
    /// Mean Sen/Spec uncertainty per stratum.
    pub mean_uncertainty: [Option<f64>; 3],
    /// Sen, Spec, Fusion for a three-branch model; Fusion only otherwise.
    pub branches: Vec<BranchReport>,
}

impl EvalReport {
    pub fn branch(&self, kind: BranchKind) -> Option<&BranchReport> {
        self.branches.iter().find(|b| b.branch == kind)
    }

    pub fn metrics(&self, kind: BranchKind, stratum: Stratum) -> Option<&Metrics> {
        self.branch(kind).and_then(|b| b.get(stratum))
    }
}

/// Metrics for one set of positive-class scores.
pub fn score_metrics(scores: &[f64], labels: &[Label], threshold: f64) -> Result<Metrics> {
    let preds: Vec<Label> = scores
        .iter()
        .map(|s| Label::from_bool(*s >= threshold))
        .collect();
    let c = confusion_metrics(&preds, labels)?;
    let auc = match roc_auc(scores, labels) {
        Ok(a) => Some(a),
        Err(Error::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(Metrics {
        acc: c.acc,
        sen: c.sen,
        spec: c.spec,
        f1: c.f1,
        auc,
        undefined: c.undefined,
    })
}

/// Builds the branch × stratum grid from precomputed outputs. A sample is
/// called positive when its positive-class probability is `>= threshold`;
/// targets are the adjudicated final labels.
pub fn report_from_outputs(
    outputs: &[BranchOutputs],
    data: &[LabeledSample],
    topology: Topology,
    threshold: f64,
) -> Result<EvalReport> {
    if outputs.len() != data.len() {
        return Err(Error::parameter("outputs and dataset differ in length"));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::parameter("threshold must lie in [0, 1]"));
    }
    let kinds: &[BranchKind] = match topology {
        Topology::ThreeBranch => &[BranchKind::Sen, BranchKind::Spec, BranchKind::Fusion],
        Topology::SingleHead => &[BranchKind::Fusion],
    };
    let members: Vec<Vec<usize>> = Stratum::ALL
        .iter()
        .map(|s| {
            (0..data.len())
                .filter(|&i| s.contains(data[i].record.consensus))
                .collect()
        })
        .collect();

    let mut counts = [0; 3];
    let mut mean_uncertainty = [None; 3];
    for (k, idx) in members.iter().enumerate() {
        counts[k] = idx.len();
        if !idx.is_empty() {
            let sum: f64 = idx.iter().map(|&i| outputs[i].uncertainty).sum();
            mean_uncertainty[k] = Some(sum / idx.len() as f64);
        }
    }

    let mut branches = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let mut strata = [None; 3];
        for (k, idx) in members.iter().enumerate() {
            if idx.is_empty() {
                continue;
            }
            let scores: Vec<f64> = idx.iter().map(|&i| kind.select(&outputs[i])[1]).collect();
            let labels: Vec<Label> = idx.iter().map(|&i| data[i].record.final_label).collect();
            strata[k] = Some(score_metrics(&scores, &labels, threshold)?);
        }
        branches.push(BranchReport {
            branch: kind,
            strata,
        });
    }
    Ok(EvalReport {
        threshold,
        topology,
        counts,
        mean_uncertainty,
        branches,
    })
}

/// Runs the model over `data` and reports every branch on every stratum.
pub fn evaluate(
    params: &ModelParams,
    data: &[LabeledSample],
    threshold: f64,
) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::parameter("cannot evaluate an empty dataset"));
    }
    let outputs = predict_all(params, data)?;
    report_from_outputs(&outputs, data, params.topology(), threshold)
}

pub fn predict_all(params: &ModelParams, data: &[LabeledSample]) -> Result<Vec<BranchOutputs>> {
    data.iter()
        .map(|s| params.predict(&s.sample.features))
        .collect()
}

/// Fusion-branch AUC against final labels.
pub fn fusion_auc(params: &ModelParams, data: &[LabeledSample]) -> Result<f64> {
    let scores: Vec<f64> = data
        .iter()
        .map(|s| params.predict(&s.sample.features).map(|o| o.y_fusion[1]))
        .collect::<Result<_>>()?;
    let labels: Vec<Label> = data.iter().map(|s| s.record.final_label).collect();
    roc_auc(&scores, &labels)
}
