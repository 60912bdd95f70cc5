//! Dataset CSV files.
//!
//! Header: `sample_id,f_0,...,f_{d-1},true_label,rater_labels,adjudicator_label,consensus,final_label,soft_label`.
//! Labels are `0`/`1`. `rater_labels` joins the stage-one gradings as
//! `rater_id:label` with `;`. `adjudicator_label` uses the same
//! `rater_id:label` form and is empty on consensus rows. Floats are written
//! in shortest round-trip form, so a read after a write is exact.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use multirater_core::rater_sim::{GradingRecord, LabeledSample, Rating, SyntheticSample};
use multirater_core::Label;

const TAIL: [&str; 6] = [
    "true_label",
    "rater_labels",
    "adjudicator_label",
    "consensus",
    "final_label",
    "soft_label",
];

pub fn header(dim: usize) -> Vec<String> {
    let mut h = vec!["sample_id".to_string()];
    h.extend((0..dim).map(|i| format!("f_{i}")));
    h.extend(TAIL.iter().map(|s| s.to_string()));
    h
}

fn rating(r: &Rating) -> String {
    format!("{}:{}", r.rater, r.label.as_u8())
}

pub fn write_csv(path: &Path, data: &[LabeledSample], dim: usize) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(header(dim))?;
    for s in data {
        if s.sample.features.len() != dim {
            bail!(
                "sample {} has {} features, expected {dim}",
                s.sample.id,
                s.sample.features.len()
            );
        }
        let rec = &s.record;
        let mut row = vec![s.sample.id.to_string()];
        row.extend(s.sample.features.iter().map(|f| f.to_string()));
        row.push(s.sample.true_label.as_u8().to_string());
        row.push(
            rec.stage_one
                .iter()
                .map(rating)
                .collect::<Vec<_>>()
                .join(";"),
        );
        row.push(rec.adjudication.as_ref().map(rating).unwrap_or_default());
        row.push(u8::from(rec.consensus).to_string());
        row.push(rec.final_label.as_u8().to_string());
        row.push(rec.soft_label.to_string());
        w.write_record(&row)?;
    }
    w.into_inner()
        .map_err(|e| anyhow!("flushing {}: {e}", path.display()))?
        .flush()?;
    Ok(())
}

fn label(field: &str) -> anyhow::Result<Label> {
    let v: u8 = field
        .trim()
        .parse()
        .with_context(|| format!("bad label `{field}`"))?;
    Label::from_u8(v).ok_or_else(|| anyhow!("label must be 0 or 1, got {v}"))
}

fn parse_rating(field: &str) -> anyhow::Result<Rating> {
    let (id, l) = field
        .split_once(':')
        .ok_or_else(|| anyhow!("rating `{field}` is not rater_id:label"))?;
    Ok(Rating {
        rater: id
            .trim()
            .parse()
            .with_context(|| format!("bad rater id in `{field}`"))?,
        label: label(l)?,
    })
}

/// Reads a dataset file and checks every record. Difficulty is not stored
/// and reads back as 0.
pub fn read_csv(path: &Path) -> anyhow::Result<Vec<LabeledSample>> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let head: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if head.len() < 1 + TAIL.len() {
        bail!("{}: header too short", path.display());
    }
    let dim = head.len() - 1 - TAIL.len();
    if head != header(dim) {
        bail!("{}: unexpected header {head:?}", path.display());
    }
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row?;
        let at = |k: usize| row.get(k).unwrap_or("");
        let ctx = || format!("{} row {}", path.display(), i + 1);
        let id: u64 = at(0).parse().with_context(ctx)?;
        let features = (1..=dim)
            .map(|k| at(k).parse::<f64>().with_context(ctx))
            .collect::<anyhow::Result<Vec<_>>>()?;
        let t = dim + 1;
        let stage_one = at(t + 1)
            .split(';')
            .filter(|s| !s.is_empty())
            .map(parse_rating)
            .collect::<anyhow::Result<Vec<_>>>()
            .with_context(ctx)?;
        let adjudication = match at(t + 2) {
            "" => None,
            s => Some(parse_rating(s).with_context(ctx)?),
        };
        let record = GradingRecord {
            sample_id: id,
            stage_one,
            adjudication,
            consensus: label(at(t + 3)).with_context(ctx)?.is_positive(),
            final_label: label(at(t + 4)).with_context(ctx)?,
            soft_label: at(t + 5).parse().with_context(ctx)?,
        };
        record
            .validate()
            .map_err(|e| anyhow!(e))
            .with_context(ctx)?;
        out.push(LabeledSample {
            sample: SyntheticSample {
                id,
                features,
                true_label: label(at(t)).with_context(ctx)?,
                difficulty: 0.0,
            },
            record,
        });
    }
    Ok(out)
}
