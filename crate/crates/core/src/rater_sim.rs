//! Synthetic multi-rater data.
//!
//! Samples carry a latent binary state and a scalar difficulty. A panel of
//! two stage-one raters grades every sample independently; disagreements go
//! to an adjudicator whose label becomes the ground truth.

use alloc::string::ToString;

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::label::Label;
use crate::seed::rng_for;

pub type RaterId = u8;

const STREAM_DIRECTION: u64 = 1;
const STREAM_SAMPLES: u64 = 2;
const STREAM_GRADING: u64 = 3;
const STREAM_SPLIT: u64 = 4;

/// Lower bound on soft labels; the upper bound is `1 - SOFT_LABEL_CLIP`.
pub const SOFT_LABEL_CLIP: f64 = 0.01;

/// A simulated grader.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaterProfile {
    pub id: RaterId,
    pub sensitivity: f64,
    pub specificity: f64,
}

impl RaterProfile {
    pub fn new(id: RaterId, sensitivity: f64, specificity: f64) -> Result<Self> {
        check_probability("sensitivity", sensitivity)?;
        check_probability("specificity", specificity)?;
        Ok(Self {
            id,
            sensitivity,
            specificity,
        })
    }

    /// Probability that this rater reports the wrong label for a sample.
    ///
    /// The base error (`1 - sensitivity` for positives, `1 - specificity`
    /// for negatives) grows by `1 + kappa * difficulty` and is capped at
    /// 0.5, or at the base error itself when that is already above 0.5.
    pub fn error_probability(&self, truth: Label, difficulty: f64, kappa: f64) -> f64 {
        let base = match truth {
            Label::Positive => 1.0 - self.sensitivity,
            Label::Negative => 1.0 - self.specificity,
        };
        let cap = if base > 0.5 { base } else { 0.5 };
        (base * (1.0 + kappa * difficulty)).clamp(0.0, cap)
    }

    fn grade(&self, truth: Label, difficulty: f64, kappa: f64, rng: &mut ChaCha8Rng) -> Label {
        let u: f64 = rng.random();
        if u < self.error_probability(truth, difficulty, kappa) {
            truth.flip()
        } else {
            truth
        }
    }
}

/// Two stage-one raters and one adjudicator.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    stage_one: [RaterProfile; 2],
    adjudicator: RaterProfile,
    /// Difficulty amplification of rater error.
    pub kappa: f64,
}

impl Panel {
    pub const DEFAULT_KAPPA: f64 = 2.0;

    pub fn new(stage_one: &[RaterProfile], adjudicator: RaterProfile) -> Result<Self> {
        let [a, b] = stage_one else {
            return Err(Error::parameter(alloc::format!(
                "panel needs exactly two stage-one raters, got {}",
                stage_one.len()
            )));
        };
        if a.id == b.id || a.id == adjudicator.id || b.id == adjudicator.id {
            return Err(Error::parameter("rater ids must be unique within a panel"));
        }
        Ok(Self {
            stage_one: [*a, *b],
            adjudicator,
            kappa: Self::DEFAULT_KAPPA,
        })
    }

    pub fn with_kappa(mut self, kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::parameter("kappa must be finite and >= 0"));
        }
        self.kappa = kappa;
        Ok(self)
    }

    pub fn stage_one(&self) -> &[RaterProfile; 2] {
        &self.stage_one
    }

    pub fn adjudicator(&self) -> &RaterProfile {
        &self.adjudicator
    }

    pub fn raters(&self) -> impl Iterator<Item = &RaterProfile> {
        self.stage_one
            .iter()
            .chain(core::iter::once(&self.adjudicator))
    }
}

impl Default for Panel {
    /// Stage-one raters at (0.90, 0.88) and (0.86, 0.84) sensitivity /
    /// specificity, adjudicator at 0.95 / 0.95.
    fn default() -> Self {
        Panel {
            stage_one: [
                RaterProfile {
                    id: 0,
                    sensitivity: 0.90,
                    specificity: 0.88,
                },
                RaterProfile {
                    id: 1,
                    sensitivity: 0.86,
                    specificity: 0.84,
                },
            ],
            adjudicator: RaterProfile {
                id: 2,
                sensitivity: 0.95,
                specificity: 0.95,
            },
            kappa: Self::DEFAULT_KAPPA,
        }
    }
}

/// Shape of the class-conditional feature distributions.
///
/// Each class is a two-component mixture of isotropic Gaussians placed
/// along a hidden discriminant direction: an easy component far from the
/// class boundary and a hard component near it. The coordinate along the
/// direction is the signed margin `t` (positive on the correct side), and
/// `difficulty = exp(-t² / tau)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub easy_center: f64,
    /// Easy margins below this are redrawn, which makes the easy component
    /// linearly separable.
    pub easy_floor: f64,
    pub hard_center: f64,
    pub hard_spread: f64,
    pub tau: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            easy_center: 3.0,
            easy_floor: 1.5,
            hard_center: 0.6,
            hard_spread: 0.4,
            tau: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub n_samples: usize,
    pub feature_dim: usize,
    /// Probability that a sample is latent-positive.
    pub class_balance: f64,
    /// Fraction of samples drawn from the hard component.
    pub difficulty_mix: f64,
    pub seed: u64,
    pub geometry: Geometry,
}

impl Default for GeneratorConfig {
    /// 6318 samples with the positive rate and hard fraction calibrated so
    /// that grading with [`Panel::default`] lands near the
    /// 2171 / 2315 / 781 / 1051 consensus profile.
    fn default() -> Self {
        Self {
            n_samples: 6318,
            feature_dim: 16,
            class_balance: 0.46,
            difficulty_mix: 0.40,
            seed: 0,
            geometry: Geometry::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub id: u64,
    pub features: Vec<f64>,
    pub true_label: Label,
    /// Latent difficulty in `[0, 1]`, 1 = on the class boundary.
    pub difficulty: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rating {
    pub rater: RaterId,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradingRecord {
    pub sample_id: u64,
    /// The two stage-one gradings.
    pub stage_one: Vec<Rating>,
    /// Present exactly when the stage-one raters disagreed.
    pub adjudication: Option<Rating>,
    /// `a`: stage-one raters agreed.
    pub consensus: bool,
    pub final_label: Label,
    /// Positive-class soft label in `[0.01, 0.99]`. Set with uniform rater
    /// weights at grading time; [`crate::label_engine::assign_soft_labels`]
    /// replaces it with accuracy-weighted values.
    pub soft_label: f64,
}

impl GradingRecord {
    /// Every raw rating, stage one first, adjudicator last.
    pub fn raw_labels(&self) -> impl Iterator<Item = &Rating> + '_ {
        self.stage_one.iter().chain(self.adjudication.iter())
    }

    /// Checks the record invariants.
    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.stage_one.first() else {
            return Err(Error::contract("record has no stage-one ratings"));
        };
        let agreed = self.stage_one.iter().all(|r| r.label == first.label);
        if agreed != self.consensus {
            return Err(Error::contract(
                "consensus flag does not match stage-one ratings",
            ));
        }
        match (self.consensus, self.adjudication) {
            (true, None) if self.final_label == first.label => {}
            (false, Some(adj)) if self.final_label == adj.label => {}
            _ => {
                return Err(Error::contract(
                    "final label / adjudication inconsistent with consensus flag",
                ))
            }
        }
        if !(SOFT_LABEL_CLIP..=1.0 - SOFT_LABEL_CLIP).contains(&self.soft_label) {
            return Err(Error::contract("soft label outside [0.01, 0.99]"));
        }
        Ok(())
    }
}

/// A sample together with its grading.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub sample: SyntheticSample,
    pub record: GradingRecord,
}

/// Consensus category of a record: `(consensus, final_label)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CategoryCounts {
    pub consensus_positive: usize,
    pub consensus_negative: usize,
    pub non_consensus_positive: usize,
    pub non_consensus_negative: usize,
}

impl CategoryCounts {
    pub fn tally<'a>(records: impl IntoIterator<Item = &'a GradingRecord>) -> Self {
        let mut c = Self::default();
        for r in records {
            match (r.consensus, r.final_label) {
                (true, Label::Positive) => c.consensus_positive += 1,
                (true, Label::Negative) => c.consensus_negative += 1,
                (false, Label::Positive) => c.non_consensus_positive += 1,
                (false, Label::Negative) => c.non_consensus_negative += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.as_array().iter().sum()
    }

    /// Counts in the order consensus+, consensus−, non-consensus+, non-consensus−.
    pub fn as_array(&self) -> [usize; 4] {
        [
            self.consensus_positive,
            self.consensus_negative,
            self.non_consensus_positive,
            self.non_consensus_negative,
        ]
    }

    pub fn proportions(&self) -> [f64; 4] {
        let n = self.total().max(1) as f64;
        self.as_array().map(|c| c as f64 / n)
    }
}

impl GeneratorConfig {
    /// Unit normal of the latent class boundary (a hyperplane through the
    /// origin) used by [`generate_dataset`] for this config.
    pub fn boundary_normal(&self) -> Vec<f64> {
        discriminant_direction(self.feature_dim, self.seed)
    }
}

/// Draws `n_samples` synthetic samples. Deterministic in the config.
pub fn generate_dataset(config: &GeneratorConfig) -> Result<Vec<SyntheticSample>> {
    if config.n_samples == 0 {
        return Err(Error::parameter("n_samples must be >= 1"));
    }
    if config.feature_dim == 0 {
        return Err(Error::parameter("feature_dim must be >= 1"));
    }
    if !(config.class_balance > 0.0 && config.class_balance < 1.0) {
        return Err(Error::parameter("class_balance must lie in (0, 1)"));
    }
    check_probability("difficulty_mix", config.difficulty_mix)?;
    let g = &config.geometry;
    if !(g.tau > 0.0 && g.hard_spread >= 0.0 && g.easy_floor <= g.easy_center) {
        return Err(Error::parameter("invalid geometry"));
    }

    let direction = discriminant_direction(config.feature_dim, config.seed);
    let mut rng = rng_for(config.seed, &[STREAM_SAMPLES]);
    let samples = (0..config.n_samples as u64)
        .map(|id| {
            let true_label = Label::from_bool(rng.random::<f64>() < config.class_balance);
            let hard = rng.random::<f64>() < config.difficulty_mix;
            let margin = if hard {
                g.hard_center + g.hard_spread * normal(&mut rng)
            } else {
                loop {
                    let t = g.easy_center + normal(&mut rng);
                    if t >= g.easy_floor {
                        break t;
                    }
                }
            };
            let side = if true_label.is_positive() {
                margin
            } else {
                -margin
            };
            // Isotropic noise with the component along the direction removed.
            let mut features: Vec<f64> =
                (0..config.feature_dim).map(|_| normal(&mut rng)).collect();
            let along = dot(&features, &direction);
            for (f, w) in features.iter_mut().zip(&direction) {
                *f += (side - along) * w;
            }
            SyntheticSample {
                id,
                features,
                true_label,
                difficulty: libm::exp(-margin * margin / g.tau),
            }
        })
        .collect();
    Ok(samples)
}

/// Grades one sample with the panel. Randomness is keyed on
/// `(seed, sample.id)`.
pub fn grade_sample(sample: &SyntheticSample, panel: &Panel, seed: u64) -> GradingRecord {
    let mut rng = rng_for(seed, &[STREAM_GRADING, sample.id]);
    let stage_one: Vec<Rating> = panel
        .stage_one
        .iter()
        .map(|r| Rating {
            rater: r.id,
            label: r.grade(sample.true_label, sample.difficulty, panel.kappa, &mut rng),
        })
        .collect();
    let consensus = stage_one[0].label == stage_one[1].label;
    let adjudication = (!consensus).then(|| Rating {
        rater: panel.adjudicator.id,
        label: panel
            .adjudicator
            .grade(sample.true_label, sample.difficulty, panel.kappa, &mut rng),
    });
    let final_label = adjudication.map_or(stage_one[0].label, |r| r.label);
    let mut record = GradingRecord {
        sample_id: sample.id,
        stage_one,
        adjudication,
        consensus,
        final_label,
        soft_label: 0.5,
    };
    record.soft_label = uniform_soft_label(&record);
    record
}

/// Generates and grades a full dataset.
pub fn simulate(config: &GeneratorConfig, panel: &Panel) -> Result<Vec<LabeledSample>> {
    let grading_seed = crate::seed::derive_seed(config.seed, &[STREAM_GRADING]);
    Ok(generate_dataset(config)?
        .into_iter()
        .map(|sample| {
            let record = grade_sample(&sample, panel, grading_seed);
            LabeledSample { sample, record }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let r = Self { train, val, test };
        if r.as_array().iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::parameter("split ratios must be finite and >= 0"));
        }
        if libm::fabs(train + val + test - 1.0) > 1e-9 {
            return Err(Error::parameter("split ratios must sum to 1"));
        }
        Ok(r)
    }

    fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.60,
            val: 0.15,
            test: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetSplit {
    pub train: Vec<LabeledSample>,
    pub val: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
}

/// Stratified random partition by `(final_label, consensus)`.
///
/// Each stratum contributes `floor` or `ceil` of its ideal share to every
/// split, and the leftover units are handed to the splits furthest behind
/// their running target, so split totals also land within one record of
/// `n * ratio`. Each split is returned in sample-id order.
pub fn split_dataset(
    records: &[LabeledSample],
    ratios: SplitRatios,
    seed: u64,
) -> Result<DatasetSplit> {
    let ratios = SplitRatios::new(ratios.train, ratios.val, ratios.test)?;
    let ratio = ratios.as_array();

    let mut strata: [Vec<&LabeledSample>; 4] = Default::default();
    for r in records {
        let idx = (r.record.final_label.index() << 1) | usize::from(r.record.consensus);
        strata[idx].push(r);
    }

    let mut out: [Vec<LabeledSample>; 3] = Default::default();
    let mut deficit = [0.0f64; 3];
    for (s, members) in strata.iter_mut().enumerate() {
        if members.is_empty() {
            log::warn!("split_dataset: stratum {s} (label, consensus) is empty");
            continue;
        }
        let mut rng = rng_for(seed, &[STREAM_SPLIT, s as u64]);
        shuffle(members, &mut rng);

        let n = members.len() as f64;
        let mut counts = [0usize; 3];
        let mut pending = deficit;
        for k in 0..3 {
            let ideal = n * ratio[k];
            counts[k] = libm::floor(ideal) as usize;
            pending[k] += ideal - counts[k] as f64;
        }
        let extra = members.len() - counts.iter().sum::<usize>();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| pending[b].total_cmp(&pending[a]).then(a.cmp(&b)));
        for &k in order.iter().take(extra) {
            counts[k] += 1;
            pending[k] -= 1.0;
        }
        deficit = pending;

        let mut it = members.iter();
        for (k, &c) in counts.iter().enumerate() {
            out[k].extend(it.by_ref().take(c).map(|r| (*r).clone()));
        }
    }
    for split in &mut out {
        split.sort_by_key(|r| r.sample.id);
    }
    let [train, val, test] = out;
    Ok(DatasetSplit { train, val, test })
}

fn uniform_soft_label(record: &GradingRecord) -> f64 {
    let (sum, n) = record
        .raw_labels()
        .fold((0.0, 0.0), |(s, n), r| (s + r.label.as_f64(), n + 1.0));
    (sum / n).clamp(SOFT_LABEL_CLIP, 1.0 - SOFT_LABEL_CLIP)
}

fn discriminant_direction(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_for(seed, &[STREAM_DIRECTION]);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| normal(&mut rng)).collect();
        let norm = libm::sqrt(dot(&v, &v));
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        let mut msg = name.to_string();
        msg.push_str(" must lie in [0, 1]");
        Err(Error::Parameter(msg))
    }
}

#[cfg(test)]
pub(crate) fn toy_sample(id: u64, truth: Label, difficulty: f64) -> SyntheticSample {
    SyntheticSample {
        id,
        features: alloc::vec![0.0; 2],
        true_label: truth,
        difficulty,
    }
}
