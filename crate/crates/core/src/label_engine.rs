//! Training targets derived from raw gradings.

use alloc::collections::BTreeMap;
use alloc::format;

use rand::Rng;

use crate::error::{Error, Result};
use crate::label::{Label, Probs};
use crate::rater_sim::{GradingRecord, LabeledSample, RaterId, SOFT_LABEL_CLIP};
use crate::seed::rng_for;

const STREAM_POOL: u64 = 11;

/// Minimum rater weight.
pub const WEIGHT_FLOOR: f64 = 1e-6;

/// Per-rater fusion weights: accuracy against the adjudicated label.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RaterWeights {
    weights: BTreeMap<RaterId, f64>,
}

impl RaterWeights {
    pub fn get(&self, rater: RaterId) -> Option<f64> {
        self.weights.get(&rater).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (RaterId, f64)> + '_ {
        self.weights.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Builds weights from explicit values, applying the floor.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (RaterId, f64)>) -> Self {
        Self {
            weights: pairs
                .into_iter()
                .map(|(k, v)| (k, v.max(WEIGHT_FLOOR)))
                .collect(),
        }
    }
}

/// Which sampled-label branch a draw is for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolBranch {
    /// Positive ratings are doubled in the pool.
    Sen,
    /// Negative ratings are doubled in the pool.
    Spec,
}

/// Targets for one sample in one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchLabels {
    pub sen_label: Label,
    pub spec_label: Label,
    /// `(1 - y, y)`.
    pub fusion_soft: Probs,
    pub consensus: bool,
}

/// Fraction of each rater's labels that match the final label.
///
/// Only pass the training split. Raters listed in `expected` that have no
/// gradings are left out and logged.
pub fn compute_rater_weights<'a>(
    records: impl IntoIterator<Item = &'a GradingRecord>,
    expected: &[RaterId],
) -> RaterWeights {
    let mut tally: BTreeMap<RaterId, (usize, usize)> = BTreeMap::new();
    for rec in records {
        for r in rec.raw_labels() {
            let e = tally.entry(r.rater).or_default();
            e.0 += usize::from(r.label == rec.final_label);
            e.1 += 1;
        }
    }
    for id in expected {
        if !tally.contains_key(id) {
            log::warn!("rater {id} has no gradings; excluded from fusion weights");
        }
    }
    RaterWeights::from_pairs(
        tally
            .into_iter()
            .map(|(id, (hits, n))| (id, hits as f64 / n as f64)),
    )
}

/// Clipped accuracy-weighted mean of the raw ratings, adjudicator included,
/// returned as `(1 - y, y)`.
pub fn soft_label(record: &GradingRecord, weights: &RaterWeights) -> Result<Probs> {
    let mut num = 0.0;
    let mut den = 0.0;
    for r in record.raw_labels() {
        let w = weights.get(r.rater).ok_or_else(|| {
            Error::Data(format!(
                "no weight for rater {} (sample {})",
                r.rater, record.sample_id
            ))
        })?;
        num += w * r.label.as_f64();
        den += w;
    }
    if den == 0.0 {
        return Err(Error::Data(format!(
            "sample {} has no ratings",
            record.sample_id
        )));
    }
    let y = (num / den).clamp(SOFT_LABEL_CLIP, 1.0 - SOFT_LABEL_CLIP);
    Ok([1.0 - y, y])
}

/// Overwrites every record's `soft_label` using `weights`.
pub fn assign_soft_labels(data: &mut [LabeledSample], weights: &RaterWeights) -> Result<()> {
    for s in data {
        s.record.soft_label = soft_label(&s.record, weights)?[1];
    }
    Ok(())
}

/// Draws a branch label uniformly from the record's label pool, where the
/// favored class appears twice per rating.
///
/// The draw is a pure function of `(seed, sample_id, epoch, branch)`.
pub fn sample_branch_label(
    record: &GradingRecord,
    branch: PoolBranch,
    seed: u64,
    epoch: u64,
) -> Label {
    let favored = match branch {
        PoolBranch::Sen => Label::Positive,
        PoolBranch::Spec => Label::Negative,
    };
    let (mut positive, mut total) = (0u32, 0u32);
    for r in record.raw_labels() {
        let copies = if r.label == favored { 2 } else { 1 };
        total += copies;
        if r.label.is_positive() {
            positive += copies;
        }
    }
    debug_assert!(total > 0, "record without ratings");
    if positive == 0 || positive == total {
        return Label::from_bool(positive > 0);
    }
    let mut rng = rng_for(seed, &[STREAM_POOL, record.sample_id, epoch, branch as u64]);
    Label::from_bool(rng.random_range(0..total) < positive)
}

/// All three branch targets for one record.
pub fn branch_labels(
    record: &GradingRecord,
    weights: &RaterWeights,
    seed: u64,
    epoch: u64,
) -> Result<BranchLabels> {
    Ok(BranchLabels {
        sen_label: sample_branch_label(record, PoolBranch::Sen, seed, epoch),
        spec_label: sample_branch_label(record, PoolBranch::Spec, seed, epoch),
        fusion_soft: soft_label(record, weights)?,
        consensus: record.consensus,
    })
}
