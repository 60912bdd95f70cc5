//! Acceptance suite. Every criterion runs at its stated tolerance and prints
//! one `PASS` or `FAIL` line; the test fails if any criterion fails.
//!
//! ```text
//! cargo test -p multirater --test acceptance -- --nocapture
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use multirater::experiment::{run_grid, Run};
use multirater::ExperimentConfig;
use multirater_core::label_engine::{sample_branch_label, PoolBranch};
use multirater_core::losses::{
    branch_loss, branch_loss_unchecked, consensus_loss, consensus_loss_unchecked, fusion_loss,
    fusion_loss_unchecked, uncertainty, BranchOutputs, LossConfig,
};
use multirater_core::metrics::{confusion_metrics, roc_auc, BranchKind, Stratum};
use multirater_core::model::{ModelConfig, ModelParams, OutputGrads, Topology};
use multirater_core::rater_sim::{
    simulate, CategoryCounts, GeneratorConfig, GradingRecord, Panel, Rating,
};
use multirater_core::trainer::Arm;
use multirater_core::{Label, Probs};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn simplex(r: &mut impl Rng) -> Probs {
    let p: f64 = r.random_range(0.005..0.995);
    [1.0 - p, p]
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

// ---------------------------------------------------------------- gradients

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
const FLOOR: f64 = 1e-5;
const INSTANCES: usize = 100;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FLOOR)
}

fn fd(f: impl Fn(&Probs) -> f64, p: &Probs) -> Probs {
    let mut g = [0.0; 2];
    for j in 0..2 {
        let (mut a, mut b) = (*p, *p);
        a[j] += H;
        b[j] -= H;
        g[j] = (f(&a) - f(&b)) / (2.0 * H);
    }
    g
}

fn dist(a: &Probs, b: &Probs) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// The hinge is not differentiable at `‖Δ‖ = m` and the norm not at 0.
fn smooth_pair(r: &mut impl Rng, m: f64) -> (Probs, Probs) {
    loop {
        let (a, b) = (simplex(r), simplex(r));
        let d = dist(&a, &b);
        if (d - m).abs() > 1e-3 && d > 1e-3 {
            return (a, b);
        }
    }
}

struct Worst(f64);

impl Worst {
    fn see(&mut self, analytic: f64, numeric: f64) {
        self.0 = self.0.max(rel_err(analytic, numeric));
    }
}

fn grad_consensus(r: &mut impl Rng) -> f64 {
    let mut w = Worst(0.0);
    for i in 0..INSTANCES {
        let m = if i % 2 == 0 {
            1.0
        } else {
            r.random_range(0.2..1.4)
        };
        let (a, b) = smooth_pair(r, m);
        let agreed = r.random();
        let c = consensus_loss(&a, &b, agreed, m).unwrap();
        let ga = fd(|x| consensus_loss_unchecked(x, &b, agreed, m).loss, &a);
        let gb = fd(|x| consensus_loss_unchecked(&a, x, agreed, m).loss, &b);
        for j in 0..2 {
            w.see(c.grad_sen[j], ga[j]);
            w.see(c.grad_spec[j], gb[j]);
        }
    }
    w.0
}

fn grad_branch(r: &mut impl Rng) -> f64 {
    let mut w = Worst(0.0);
    for _ in 0..INSTANCES {
        let cfg = LossConfig {
            margin: 1.0,
            alpha: r.random_range(0.0..1.0),
        };
        let (p, q) = smooth_pair(r, cfg.margin);
        let label = Label::from_bool(r.random());
        let agreed = r.random();
        let l = branch_loss(&p, label, &q, agreed, &cfg).unwrap();
        let gp = fd(
            |x| branch_loss_unchecked(x, label, &q, agreed, &cfg).loss,
            &p,
        );
        let gq = fd(
            |x| branch_loss_unchecked(&p, label, x, agreed, &cfg).loss,
            &q,
        );
        for j in 0..2 {
            w.see(l.grad_pred[j], gp[j]);
            w.see(l.grad_partner[j], gq[j]);
        }
    }
    w.0
}

fn grad_fusion(r: &mut impl Rng) -> f64 {
    let mut w = Worst(0.0);
    for _ in 0..INSTANCES {
        let n = r.random_range(1..12);
        let preds: Vec<Probs> = (0..n).map(|_| simplex(r)).collect();
        let soft: Vec<Probs> = (0..n).map(|_| simplex(r)).collect();
        let u: Vec<f64> = (0..n).map(|_| r.random_range(0.0..0.5)).collect();
        let f = fusion_loss(&preds, &soft, &u).unwrap();
        for k in 0..n {
            let g = fd(
                |x| {
                    let mut p = preds.clone();
                    p[k] = *x;
                    fusion_loss_unchecked(&p, &soft, &u).loss
                },
                &preds[k],
            );
            for j in 0..2 {
                w.see(f.grads[k][j], g[j]);
            }
        }
    }
    w.0
}

struct Batch {
    x: Vec<Vec<f64>>,
    sen: Vec<Label>,
    spec: Vec<Label>,
    soft: Vec<Probs>,
    agreed: Vec<bool>,
    u: Vec<f64>,
}

/// Training objective on one batch with `u` frozen, as the trainer treats it.
fn objective(p: &ModelParams, b: &Batch, cfg: &LossConfig) -> f64 {
    let n = b.x.len() as f64;
    let outs: Vec<BranchOutputs> = b.x.iter().map(|x| p.predict(x).unwrap()).collect();
    let mut total = 0.0;
    for (i, o) in outs.iter().enumerate() {
        total += branch_loss(&o.y_sen, b.sen[i], &o.y_spec, b.agreed[i], cfg)
            .unwrap()
            .loss
            / n;
        total += branch_loss(&o.y_spec, b.spec[i], &o.y_sen, b.agreed[i], cfg)
            .unwrap()
            .loss
            / n;
    }
    let fused: Vec<Probs> = outs.iter().map(|o| o.y_fusion).collect();
    total + fusion_loss(&fused, &b.soft, &b.u).unwrap().loss
}

fn analytic(p: &ModelParams, b: &Batch, cfg: &LossConfig) -> ModelParams {
    let n = b.x.len() as f64;
    let fwd: Vec<_> = b.x.iter().map(|x| p.forward(x).unwrap()).collect();
    let fused: Vec<Probs> = fwd.iter().map(|(o, _)| o.y_fusion).collect();
    let f = fusion_loss(&fused, &b.soft, &b.u).unwrap();
    let mut grads = p.zeros_like();
    for (i, (o, cache)) in fwd.iter().enumerate() {
        let s = branch_loss(&o.y_sen, b.sen[i], &o.y_spec, b.agreed[i], cfg).unwrap();
        let q = branch_loss(&o.y_spec, b.spec[i], &o.y_sen, b.agreed[i], cfg).unwrap();
        let mut g = OutputGrads {
            fusion: f.grads[i],
            ..Default::default()
        };
        for j in 0..2 {
            g.sen[j] = (s.grad_pred[j] + q.grad_partner[j]) / n;
            g.spec[j] = (q.grad_pred[j] + s.grad_partner[j]) / n;
        }
        p.backward_into(cache, &g, &mut grads).unwrap();
    }
    grads
}

fn grad_model(r: &mut impl Rng) -> f64 {
    let cfg = LossConfig::default();
    let mut w = Worst(0.0);
    for inst in 0..INSTANCES as u64 {
        let mut params = ModelParams::new(&ModelConfig {
            input_dim: 5,
            trunk_dims: vec![6, 5],
            branch_dim: 4,
            seed: inst,
            topology: Topology::ThreeBranch,
        })
        .unwrap();
        let scale = r.random_range(0.5..2.0);
        for s in params.slices_mut() {
            for v in s.iter_mut() {
                *v = *v * scale + r.random_range(-0.3..0.3);
            }
        }
        let x: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..5).map(|_| r.random_range(-2.0..2.0)).collect())
            .collect();
        let outs: Vec<BranchOutputs> = x.iter().map(|v| params.predict(v).unwrap()).collect();
        let b = Batch {
            sen: (0..20).map(|_| Label::from_bool(r.random())).collect(),
            spec: (0..20).map(|_| Label::from_bool(r.random())).collect(),
            soft: (0..20)
                .map(|_| {
                    let y = r.random_range(0.01..0.99);
                    [1.0 - y, y]
                })
                .collect(),
            agreed: outs
                .iter()
                .map(|o| {
                    let d = dist(&o.y_sen, &o.y_spec);
                    r.random_bool(0.6) || (d - cfg.margin).abs() < 1e-3 || d < 1e-3
                })
                .collect(),
            u: outs.iter().map(|o| o.uncertainty).collect(),
            x,
        };
        let grads = analytic(&params, &b, &cfg);
        let names: Vec<String> = params.tensors().into_iter().map(|t| t.name).collect();
        let exact: Vec<Vec<f64>> = grads.slices().into_iter().map(<[f64]>::to_vec).collect();
        let mut probe = params.clone();
        for (k, name) in names.iter().enumerate() {
            for i in 0..exact[k].len() {
                let orig = probe.tensor_mut(name).unwrap()[i];
                probe.tensor_mut(name).unwrap()[i] = orig + H;
                let up = objective(&probe, &b, &cfg);
                probe.tensor_mut(name).unwrap()[i] = orig - H;
                let down = objective(&probe, &b, &cfg);
                probe.tensor_mut(name).unwrap()[i] = orig;
                w.see(exact[k][i], (up - down) / (2.0 * H));
            }
        }
    }
    w.0
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut r = rng(101);
    let worst = [
        ("consensus", grad_consensus(&mut r)),
        ("branch", grad_branch(&mut r)),
        ("fusion", grad_fusion(&mut r)),
        ("model", grad_model(&mut r)),
    ];
    let elapsed = start.elapsed();
    let detail = worst
        .iter()
        .map(|(n, e)| format!("{n} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    check(
        worst.iter().all(|(_, e)| *e < TOL) && elapsed < Duration::from_secs(60),
        format!(
            "gradients, {INSTANCES} instances each, worst rel err: {detail}; {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

// ------------------------------------------------------------ loss oracles

fn scalar_consensus(a: f64, b: f64, c: f64, d: f64, agreed: bool, m: f64) -> f64 {
    let dist = ((a - c) * (a - c) + (b - d) * (b - d)).sqrt();
    let h = if agreed {
        dist
    } else if m > dist {
        m - dist
    } else {
        0.0
    };
    0.5 * h * h
}

fn scalar_uncertainty(a: f64, b: f64, c: f64, d: f64) -> f64 {
    0.5 * (1.0 - (a * c + b * d) / ((a * a + b * b).sqrt() * (c * c + d * d).sqrt()))
}

fn scalar_fusion(pred: &[Probs], soft: &[Probs], u: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..pred.len() {
        let kl = soft[i][0] * (soft[i][0] / pred[i][0]).ln()
            + soft[i][1] * (soft[i][1] / pred[i][1]).ln();
        num += (1.0 + u[i]) * kl;
        den += 1.0 + u[i];
    }
    num / den
}

fn criterion_2() -> Outcome {
    let mut r = rng(202);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (s, p) = (simplex(&mut r), simplex(&mut r));
        let agreed = r.random();
        let m = r.random_range(0.1..1.5);
        let got = consensus_loss(&s, &p, agreed, m).unwrap().loss;
        worst = worst.max((got - scalar_consensus(s[0], s[1], p[0], p[1], agreed, m)).abs());
        let got = uncertainty(&s, &p).unwrap();
        worst = worst.max((got - scalar_uncertainty(s[0], s[1], p[0], p[1])).abs());
        let n = r.random_range(1..40);
        let pred: Vec<Probs> = (0..n).map(|_| simplex(&mut r)).collect();
        let soft: Vec<Probs> = (0..n).map(|_| simplex(&mut r)).collect();
        let u: Vec<f64> = (0..n).map(|_| r.random_range(0.0..=0.5)).collect();
        let got = fusion_loss(&pred, &soft, &u).unwrap().loss;
        worst = worst.max((got - scalar_fusion(&pred, &soft, &u)).abs());
    }

    let kl1 = 0.99 * (0.99f64 / 0.9).ln() + 0.01 * (0.01f64 / 0.1).ln();
    let examples = [
        (
            consensus_loss(&[0.3, 0.7], &[0.3, 0.7], false, 1.0)
                .unwrap()
                .loss,
            0.5,
        ),
        (
            consensus_loss(&[0.3, 0.7], &[0.3, 0.7], true, 1.0)
                .unwrap()
                .loss,
            0.0,
        ),
        (
            uncertainty(&[0.5, 0.5], &[1.0, 0.0]).unwrap(),
            0.5 * (1.0 - std::f64::consts::FRAC_1_SQRT_2),
        ),
        (uncertainty(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.5),
        (kl1, 0.071_331_227_1),
        (
            fusion_loss(
                &[[0.9, 0.1], [0.5, 0.5]],
                &[[0.99, 0.01], [0.5, 0.5]],
                &[0.5, 0.0],
            )
            .unwrap()
            .loss,
            1.5 * kl1 / 2.5,
        ),
    ];
    let ex_worst = examples
        .iter()
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    check(
        worst < 1e-9 && ex_worst < 1e-9,
        format!(
            "loss oracles, 1000 random inputs max |diff| {worst:.1e}, {} worked examples max |diff| {ex_worst:.1e}",
            examples.len()
        ),
    )
}

// --------------------------------------------------------------- label pool

fn record(stage_one: [bool; 2], adj: Option<bool>) -> GradingRecord {
    let consensus = stage_one[0] == stage_one[1];
    GradingRecord {
        sample_id: 1,
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
        adjudication: adj.map(|a| Rating {
            rater: 2,
            label: Label::from_bool(a),
        }),
        consensus,
        final_label: Label::from_bool(adj.unwrap_or(stage_one[0])),
        soft_label: 0.5,
    }
}

fn criterion_3() -> Outcome {
    const DRAWS: u64 = 10_000;
    let cases = [
        // Two stage-one labels only: Sen pool {1, 1, 0}.
        record([true, false], None),
        record([true, false], Some(true)),
        record([false, true], Some(false)),
        record([true, true], None),
        record([false, false], None),
    ];
    let mut worst: f64 = 0.0;
    for rec in &cases {
        for branch in [PoolBranch::Sen, PoolBranch::Spec] {
            let favored = branch == PoolBranch::Sen;
            let (mut pos, mut total) = (0.0, 0.0);
            for r in rec.raw_labels() {
                let w = if r.label.is_positive() == favored {
                    2.0
                } else {
                    1.0
                };
                total += w;
                pos += if r.label.is_positive() { w } else { 0.0 };
            }
            let hits = (0..DRAWS)
                .filter(|&e| sample_branch_label(rec, branch, 11, e).is_positive())
                .count();
            worst = worst.max((hits as f64 / DRAWS as f64 - pos / total).abs());
        }
    }
    check(
        worst <= 0.02,
        format!(
            "label pools, {DRAWS} draws per pool, max |freq - exact| {:.2} points",
            100.0 * worst
        ),
    )
}

// ---------------------------------------------------------------- simulator

fn criterion_4() -> Outcome {
    const PROFILE: [f64; 4] = [2171.0, 2315.0, 781.0, 1051.0];
    let panel = Panel::default();
    let data = simulate(&GeneratorConfig::default(), &panel).unwrap();
    let p = CategoryCounts::tally(data.iter().map(|s| &s.record)).proportions();
    let total: f64 = PROFILE.iter().sum();
    let cat_worst = (0..4)
        .map(|k| (p[k] - PROFILE[k] / total).abs())
        .fold(0.0, f64::max);

    let easy = simulate(
        &GeneratorConfig {
            n_samples: 20_000,
            difficulty_mix: 0.0,
            seed: 9,
            ..Default::default()
        },
        &panel,
    )
    .unwrap();
    let mut rater_worst: f64 = 0.0;
    for rater in panel.stage_one() {
        let (mut tp, mut pos, mut tn, mut neg) = (0usize, 0usize, 0usize, 0usize);
        for s in &easy {
            let said = s
                .record
                .stage_one
                .iter()
                .find(|r| r.rater == rater.id)
                .unwrap()
                .label
                .is_positive();
            if s.sample.true_label.is_positive() {
                pos += 1;
                tp += said as usize;
            } else {
                neg += 1;
                tn += !said as usize;
            }
        }
        rater_worst = rater_worst
            .max((tp as f64 / pos as f64 - rater.sensitivity).abs())
            .max((tn as f64 / neg as f64 - rater.specificity).abs());
    }
    check(
        cat_worst <= 0.03 && rater_worst <= 0.02,
        format!(
            "simulator, category proportions {:.3}/{:.3}/{:.3}/{:.3} max dev {:.2} points, rater sens/spec max dev {:.2} points",
            p[0],
            p[1],
            p[2],
            p[3],
            100.0 * cat_worst,
            100.0 * rater_worst
        ),
    )
}

// ------------------------------------------------------ shared training grid

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Grid {
    runs: Vec<Run>,
    errors: Vec<String>,
    elapsed: Duration,
}

impl Grid {
    fn arm(&self, arm: Arm) -> impl Iterator<Item = &Run> {
        self.runs.iter().filter(move |r| r.arm == arm)
    }

    fn metric(
        &self,
        arm: Arm,
        branch: BranchKind,
        stratum: Stratum,
        f: impl Fn(&multirater_core::metrics::Metrics) -> f64,
    ) -> Vec<f64> {
        self.arm(arm)
            .map(|r| f(r.report.metrics(branch, stratum).expect("metrics present")))
            .collect()
    }
}

fn grid() -> &'static Grid {
    static GRID: OnceLock<Grid> = OnceLock::new();
    GRID.get_or_init(|| {
        let start = Instant::now();
        let (mut runs, mut errors) = (Vec::new(), Vec::new());
        for r in run_grid(&ExperimentConfig::default(), &Arm::ALL, &SEEDS) {
            match r {
                Ok(run) => runs.push(run),
                Err(e) => errors.push(e),
            }
        }
        Grid {
            runs,
            errors,
            elapsed: start.elapsed(),
        }
    })
}

fn grid_ok(g: &Grid) -> Result<(), String> {
    if g.errors.is_empty() {
        Ok(())
    } else {
        Err(format!("training failed: {}", g.errors.join("; ")))
    }
}

fn criterion_5() -> Outcome {
    let g = grid();
    grid_ok(g)?;
    let med = |b, f: fn(&multirater_core::metrics::Metrics) -> f64| {
        median(g.metric(Arm::Full, b, Stratum::All, f))
    };
    let sen = [BranchKind::Sen, BranchKind::Fusion, BranchKind::Spec].map(|b| med(b, |m| m.sen));
    let spec = [BranchKind::Sen, BranchKind::Fusion, BranchKind::Spec].map(|b| med(b, |m| m.spec));
    check(
        sen[0] > sen[1] && sen[1] > sen[2] && spec[0] < spec[1] && spec[1] < spec[2]
            && g.elapsed < Duration::from_secs(600),
        format!(
            "branch ordering, median sen Sen/Fusion/Spec {:.4}/{:.4}/{:.4}, median spec {:.4}/{:.4}/{:.4}; grid of {} runs in {:.0}s",
            sen[0],
            sen[1],
            sen[2],
            spec[0],
            spec[1],
            spec[2],
            g.runs.len(),
            g.elapsed.as_secs_f64()
        ),
    )
}

fn criterion_6() -> Outcome {
    let g = grid();
    grid_ok(g)?;
    let f1: BTreeMap<&str, f64> = Arm::ALL
        .iter()
        .map(|&a| {
            (
                a.name(),
                median(g.metric(a, BranchKind::Fusion, Stratum::All, |m| m.f1)),
            )
        })
        .collect();
    let (base, multi, full) = (f1["baseline"], f1["multibr"], f1["full"]);
    let detail = f1
        .iter()
        .map(|(k, v)| format!("{k} {:.2}", 100.0 * v))
        .collect::<Vec<_>>()
        .join(", ");
    check(
        (0.88..=0.92).contains(&base) && full >= multi && multi >= base - 0.005 && full - base >= 0.01,
        format!(
            "ablation trend, median fusion F1 {detail}; full - baseline {:+.2} points (need >= +1.00)",
            100.0 * (full - base)
        ),
    )
}

fn criterion_7() -> Outcome {
    let g = grid();
    grid_ok(g)?;
    let (mut u_hits, mut auc_hits, mut n) = (0, 0, 0);
    for run in g.arm(Arm::Full) {
        n += 1;
        let u = |s: Stratum| run.report.mean_uncertainty[s as usize];
        let (c, nc) = (u(Stratum::Consensus), u(Stratum::NonConsensus));
        if nc.zip(c).is_some_and(|(nc, c)| nc > c) {
            u_hits += 1;
        }
        let auc = |s| {
            run.report
                .metrics(BranchKind::Fusion, s)
                .and_then(|m| m.auc)
        };
        if auc(Stratum::Consensus)
            .zip(auc(Stratum::NonConsensus))
            .is_some_and(|(c, nc)| c > nc)
        {
            auc_hits += 1;
        }
    }
    check(
        n == SEEDS.len() && u_hits >= 4 && auc_hits == n,
        format!("difficulty signal, u(non-consensus) > u(consensus) in {u_hits}/{n} seeds, AUC(consensus) > AUC(non-consensus) in {auc_hits}/{n} seeds"),
    )
}

// ------------------------------------------------------------------ metrics

fn brute_auc(scores: &[f64], y: &[Label]) -> Option<f64> {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..y.len() {
        for j in 0..y.len() {
            if y[i].is_positive() && !y[j].is_positive() {
                pairs += 1.0;
                wins += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    (pairs > 0.0).then(|| wins / pairs)
}

fn criterion_8() -> Outcome {
    let mut r = rng(808);
    let mut mismatches = Vec::new();
    let mut invariance_failures = 0;
    for trial in 0..1000 {
        let n = r.random_range(1..=50);
        let y: Vec<Label> = (0..n).map(|_| Label::from_bool(r.random())).collect();
        let pred: Vec<Label> = (0..n).map(|_| Label::from_bool(r.random())).collect();
        let scores: Vec<f64> = (0..n).map(|_| r.random_range(0..8) as f64 / 8.0).collect();
        let c = confusion_metrics(&pred, &y).unwrap();
        let count = |p: bool, t: bool| {
            (0..n)
                .filter(|&i| pred[i].is_positive() == p && y[i].is_positive() == t)
                .count()
        };
        let (tp, fp, tn, fn_) = (
            count(true, true),
            count(true, false),
            count(false, false),
            count(false, true),
        );
        let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let same = (c.tp, c.fp, c.tn, c.fn_) == (tp, fp, tn, fn_)
            && c.acc == (tp + tn) as f64 / n as f64
            && c.sen == div(tp, tp + fn_)
            && c.spec == div(tn, tn + fp)
            && c.f1 == div(2 * tp, 2 * tp + fp + fn_);
        let auc = roc_auc(&scores, &y).ok();
        if !same || auc != brute_auc(&scores, &y) {
            mismatches.push(trial);
        }
        // Strictly increasing transform.
        let warped: Vec<f64> = scores
            .iter()
            .map(|s| (3.0 * s - 1.0).exp() + s * s * s)
            .collect();
        if roc_auc(&warped, &y).ok() != auc {
            invariance_failures += 1;
        }
    }
    check(
        mismatches.is_empty() && invariance_failures == 0,
        format!(
            "metrics, 1000 trials of size <= 50: {} brute-force mismatches, {invariance_failures} monotone-transform violations",
            mismatches.len()
        ),
    )
}

// -------------------------------------------------------------- determinism

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_multirater"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn pipeline(root: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();
    let small = [
        "--set",
        "n_samples=600",
        "--set",
        "trunk_dims=16,16",
        "--set",
        "branch_dim=8",
    ];
    let mut gen = vec!["generate", "--seed", "13", "--out"];
    let data = p("data");
    gen.push(&data);
    gen.extend(small);
    run_cli(&gen)?;
    let run = p("run");
    run_cli(&[
        "train",
        "--data",
        &data,
        "--out",
        &run,
        "--ablation",
        "full",
        "--epochs",
        "4",
    ])?;
    let ckpt = p("run/checkpoint.json");
    let eval = p("eval");
    run_cli(&[
        "eval",
        "--checkpoint",
        &ckpt,
        "--data",
        &data,
        "--out",
        &eval,
    ])?;

    let mut files = BTreeMap::new();
    for entry in walkdir::WalkDir::new(root) {
        let entry = entry.map_err(|e| e.to_string())?;
        if entry.file_type().is_file() {
            let bytes = std::fs::read(entry.path()).map_err(|e| e.to_string())?;
            files.insert(
                entry.path().strip_prefix(root).unwrap().to_path_buf(),
                bytes,
            );
        }
    }
    Ok(files)
}

fn criterion_9() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let fa = pipeline(a.path())?;
    let fb = pipeline(b.path())?;
    let differing: Vec<String> = fa
        .iter()
        .filter(|(k, v)| fb.get(*k) != Some(*v))
        .map(|(k, _)| k.display().to_string())
        .collect();
    let same_set = fa.keys().eq(fb.keys());
    check(
        same_set && differing.is_empty() && fa.len() >= 9,
        format!(
            "determinism, generate -> train -> eval twice: {} artifacts, {} differ{}",
            fa.len(),
            differing.len(),
            if differing.is_empty() {
                String::new()
            } else {
                format!(" ({})", differing.join(", "))
            }
        ),
    )
}

#[test]
fn acceptance() {
    let criteria: [fn() -> Outcome; 9] = [
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
        criterion_9,
    ];
    let mut failed = Vec::new();
    println!();
    for (i, f) in (1..).zip(criteria) {
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed.push(i);
                ("FAIL", d)
            }
        };
        println!("{tag} criterion {i}: {detail}");
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
