#![allow(dead_code)]

use multirater_core::rater_sim::{GradingRecord, LabeledSample, Rating, SyntheticSample};
use multirater_core::{Label, Probs};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A point on the open 2-simplex, away from the corners.
pub fn simplex(rng: &mut impl Rng) -> Probs {
    let p: f64 = rng.random_range(0.005..0.995);
    [1.0 - p, p]
}

/// Record with the given stage-one labels and, on disagreement, adjudicator label.
pub fn record(id: u64, stage_one: [bool; 2], adj: bool) -> GradingRecord {
    let consensus = stage_one[0] == stage_one[1];
    let adjudication = (!consensus).then_some(Rating {
        rater: 2,
        label: Label::from_bool(adj),
    });
    GradingRecord {
        sample_id: id,
        stage_one: vec![
            Rating {
                rater: 0,
                label: Label::from_bool(stage_one[0]),
            },
            Rating {
                rater: 1,
                label: Label::from_bool(stage_one[1]),
            },
        ],
        adjudication,
        consensus,
        final_label: Label::from_bool(if consensus { stage_one[0] } else { adj }),
        soft_label: 0.5,
    }
}

pub fn labeled(id: u64, features: Vec<f64>, rec: GradingRecord) -> LabeledSample {
    LabeledSample {
        sample: SyntheticSample {
            id,
            features,
            true_label: rec.final_label,
            difficulty: 0.0,
        },
        record: rec,
    }
}

/// Random record plus features, for toy training sets.
pub fn random_labeled(id: u64, dim: usize, rng: &mut impl Rng) -> LabeledSample {
    let features: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
    let rec = record(id, [rng.random(), rng.random()], rng.random());
    labeled(id, features, rec)
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
