//! Multi-branch optimization.
//!
//! Each step draws the Sen/Spec pool labels for the batch, runs the model,
//! sums the two composite branch losses and the fusion KL loss, and takes
//! one Adam step over all parameters.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::label::Probs;
use crate::label_engine::{
    compute_rater_weights, sample_branch_label, soft_label, PoolBranch, RaterWeights,
};
use crate::losses::{branch_loss_unchecked, fusion_loss_unchecked, LossConfig};
use crate::metrics::fusion_auc;
use crate::model::{ModelConfig, ModelParams, OutputGrads, Topology};
use crate::optim::{Adam, AdamConfig};
use crate::rater_sim::LabeledSample;
use crate::seed::rng_for;

const STREAM_SHUFFLE: u64 = 31;

/// Which parts of the method are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ablation {
    pub multi_branch: bool,
    pub consensus_loss: bool,
    pub uncertainty_weighting: bool,
}

/// The five ablation arms, in reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arm {
    Baseline,
    MultiBr,
    ConLoss,
    Uncerty,
    Full,
}

impl Arm {
    pub const ALL: [Arm; 5] = [
        Arm::Baseline,
        Arm::MultiBr,
        Arm::ConLoss,
        Arm::Uncerty,
        Arm::Full,
    ];

    pub fn ablation(self) -> Ablation {
        let (multi_branch, consensus_loss, uncertainty_weighting) = match self {
            Arm::Baseline => (false, false, false),
            Arm::MultiBr => (true, false, false),
            Arm::ConLoss => (true, true, false),
            Arm::Uncerty => (true, false, true),
            Arm::Full => (true, true, true),
        };
        Ablation {
            multi_branch,
            consensus_loss,
            uncertainty_weighting,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Arm::Baseline => "baseline",
            Arm::MultiBr => "multibr",
            Arm::ConLoss => "conloss",
            Arm::Uncerty => "uncerty",
            Arm::Full => "full",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub lr: f64,
    pub lr_halving_period: usize,
    pub loss: LossConfig,
    pub adam: AdamConfig,
    pub seed: u64,
    pub ablation: Ablation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            max_epochs: 50,
            lr: 2e-4,
            lr_halving_period: 15,
            loss: LossConfig::default(),
            adam: AdamConfig::default(),
            seed: 0,
            ablation: Arm::Full.ablation(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::parameter("batch_size must be >= 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::parameter("lr must be > 0"));
        }
        if self.lr_halving_period == 0 {
            return Err(Error::parameter("lr_halving_period must be >= 1"));
        }
        self.loss.validate()?;
        let a = self.ablation;
        if !a.multi_branch && (a.consensus_loss || a.uncertainty_weighting) {
            return Err(Error::parameter(
                "consensus loss and uncertainty weighting need the multi-branch model",
            ));
        }
        Ok(())
    }

    /// Step schedule: `lr · 0.5^⌊epoch / period⌋`, epochs counted from 0.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let halvings = (epoch / self.lr_halving_period).min(1000) as i32;
        self.lr * libm::pow(0.5, halvings as f64)
    }

    pub fn topology(&self) -> Topology {
        if self.ablation.multi_branch {
            Topology::ThreeBranch
        } else {
            Topology::SingleHead
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: ModelParams,
    pub adam: Adam,
    /// Epoch the next step belongs to (drives label resampling and the LR).
    pub epoch: usize,
    pub steps: u64,
    pub best: Option<(ModelParams, f64)>,
}

impl TrainState {
    pub fn new(params: ModelParams, config: &TrainConfig) -> Self {
        Self {
            adam: Adam::new(&params, config.adam),
            params,
            epoch: 0,
            steps: 0,
            best: None,
        }
    }
}

/// Batch means of each loss term. Sen/Spec/consensus are `None` for the
/// single-head baseline.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepLosses {
    /// Sen cross-entropy plus `alpha` times the consensus term.
    pub sen: Option<f64>,
    pub spec: Option<f64>,
    /// Weighted KL (multi-branch) or cross-entropy on final labels (baseline).
    pub fusion: f64,
    /// Unweighted consensus loss.
    pub consensus: Option<f64>,
    pub total: f64,
}

/// One optimizer step on `batch`.
///
/// With the multi-branch model, total loss =
/// `mean(L_sen) + mean(L_spec) + L_fusion`, where each of `L_sen`, `L_spec`
/// carries `alpha · L_con`. The baseline uses cross-entropy of the single
/// head against the final label.
pub fn train_step(
    state: &mut TrainState,
    batch: &[&LabeledSample],
    weights: &RaterWeights,
    config: &TrainConfig,
) -> Result<StepLosses> {
    if batch.is_empty() {
        return Err(Error::parameter("empty batch"));
    }
    if state.params.topology() != config.topology() {
        return Err(Error::parameter(
            "model topology does not match ablation flags",
        ));
    }
    let n = batch.len() as f64;
    let epoch = state.epoch as u64;
    let ablation = config.ablation;
    let loss_cfg = LossConfig {
        alpha: if ablation.consensus_loss {
            config.loss.alpha
        } else {
            0.0
        },
        margin: config.loss.margin,
    };

    let mut caches = Vec::with_capacity(batch.len());
    let mut upstream = Vec::with_capacity(batch.len());
    let mut fusion_preds: Vec<Probs> = Vec::with_capacity(batch.len());
    let mut fusion_targets: Vec<Probs> = Vec::with_capacity(batch.len());
    let mut fusion_u = Vec::with_capacity(batch.len());
    let mut losses = StepLosses::default();
    let (mut sen_sum, mut spec_sum, mut con_sum) = (0.0, 0.0, 0.0);

    for s in batch {
        let (out, cache) = state.params.forward(&s.sample.features)?;
        let rec = &s.record;
        let mut g = OutputGrads::default();
        if ablation.multi_branch {
            let sen_label = sample_branch_label(rec, PoolBranch::Sen, config.seed, epoch);
            let spec_label = sample_branch_label(rec, PoolBranch::Spec, config.seed, epoch);
            let sen =
                branch_loss_unchecked(&out.y_sen, sen_label, &out.y_spec, rec.consensus, &loss_cfg);
            let spec = branch_loss_unchecked(
                &out.y_spec,
                spec_label,
                &out.y_sen,
                rec.consensus,
                &loss_cfg,
            );
            sen_sum += sen.loss;
            spec_sum += spec.loss;
            con_sum += sen.consensus;
            for j in 0..2 {
                g.sen[j] = (sen.grad_pred[j] + spec.grad_partner[j]) / n;
                g.spec[j] = (spec.grad_pred[j] + sen.grad_partner[j]) / n;
            }
            fusion_preds.push(out.y_fusion);
            fusion_targets.push(soft_label(rec, weights)?);
            fusion_u.push(if ablation.uncertainty_weighting {
                out.uncertainty
            } else {
                0.0
            });
        } else {
            let ce = branch_loss_unchecked(
                &out.y_fusion,
                rec.final_label,
                &out.y_fusion,
                rec.consensus,
                &loss_cfg,
            );
            losses.fusion += ce.loss / n;
            g.fusion = [ce.grad_pred[0] / n, ce.grad_pred[1] / n];
        }
        caches.push(cache);
        upstream.push(g);
    }

    if ablation.multi_branch {
        let f = fusion_loss_unchecked(&fusion_preds, &fusion_targets, &fusion_u);
        losses.fusion = f.loss;
        for (g, fg) in upstream.iter_mut().zip(&f.grads) {
            g.fusion = *fg;
        }
        losses.sen = Some(sen_sum / n);
        losses.spec = Some(spec_sum / n);
        losses.consensus = Some(con_sum / n);
    }
    losses.total = losses.fusion + losses.sen.unwrap_or(0.0) + losses.spec.unwrap_or(0.0);
    if !losses.total.is_finite() {
        return Err(Error::NonFinite(format!(
            "epoch {} step {}: losses {:?}, batch sample ids {:?}",
            state.epoch,
            state.steps,
            losses,
            batch.iter().map(|s| s.sample.id).collect::<Vec<_>>()
        )));
    }

    let mut grads = state.params.zeros_like();
    for (cache, g) in caches.iter().zip(&upstream) {
        state.params.backward_into(cache, g, &mut grads)?;
    }
    if !grads.all_finite() {
        return Err(Error::NonFinite(format!(
            "epoch {} step {}: non-finite gradient",
            state.epoch, state.steps
        )));
    }
    let lr = config.lr_at(state.epoch);
    state.adam.step(&mut state.params, &grads, lr)?;
    state.steps += 1;
    Ok(losses)
}

/// Per-epoch training record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub loss_sen: Option<f64>,
    pub loss_spec: Option<f64>,
    pub loss_fusion: f64,
    pub loss_consensus: Option<f64>,
    /// Validation fusion-branch AUC; `None` if undefined on the split.
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    /// Parameters with the best validation AUC, or the last parameters when
    /// no epoch produced a defined AUC.
    pub params: ModelParams,
    pub best_epoch: Option<usize>,
    pub log: Vec<EpochLog>,
    /// Set when training stopped on a non-finite loss.
    pub aborted: Option<Error>,
}

/// Trains a freshly initialized model. `on_epoch` sees each log record as
/// soon as the epoch finishes.
pub fn fit(
    train: &[LabeledSample],
    val: &[LabeledSample],
    model: &ModelConfig,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<FitOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::parameter("training set is empty"));
    }
    let model = ModelConfig {
        topology: config.topology(),
        ..model.clone()
    };
    let params = ModelParams::new(&model)?;
    let weights = compute_rater_weights(train.iter().map(|s| &s.record), &[]);
    let mut state = TrainState::new(params, config);
    let mut log = Vec::with_capacity(config.max_epochs);
    let mut best_epoch = None;

    for epoch in 0..config.max_epochs {
        state.epoch = epoch;
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = rng_for(config.seed, &[STREAM_SHUFFLE, epoch as u64]);
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }

        let mut acc = [0.0f64; 4];
        let mut seen = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&LabeledSample> = chunk.iter().map(|&i| &train[i]).collect();
            let losses = match train_step(&mut state, &batch, &weights, config) {
                Ok(l) => l,
                Err(e @ Error::NonFinite(_)) => {
                    log::error!("training aborted: {e}");
                    return Ok(FitOutcome {
                        params: best_or_last(state),
                        best_epoch,
                        log,
                        aborted: Some(e),
                    });
                }
                Err(e) => return Err(e),
            };
            let w = batch.len() as f64;
            acc[0] += w * losses.sen.unwrap_or(0.0);
            acc[1] += w * losses.spec.unwrap_or(0.0);
            acc[2] += w * losses.fusion;
            acc[3] += w * losses.consensus.unwrap_or(0.0);
            seen += w;
        }

        let val_auc = if val.is_empty() {
            None
        } else {
            match fusion_auc(&state.params, val) {
                Ok(a) => Some(a),
                Err(Error::UndefinedMetric(_)) => None,
                Err(e) => return Err(e),
            }
        };
        if let Some(auc) = val_auc {
            if state.best.as_ref().is_none_or(|(_, b)| auc > *b) {
                state.best = Some((state.params.clone(), auc));
                best_epoch = Some(epoch);
            }
        }
        let multi = config.ablation.multi_branch;
        let entry = EpochLog {
            epoch,
            lr: config.lr_at(epoch),
            loss_sen: multi.then(|| acc[0] / seen),
            loss_spec: multi.then(|| acc[1] / seen),
            loss_fusion: acc[2] / seen,
            loss_consensus: multi.then(|| acc[3] / seen),
            val_auc,
        };
        on_epoch(&entry);
        log.push(entry);
    }
    state.epoch = config.max_epochs;
    Ok(FitOutcome {
        params: best_or_last(state),
        best_epoch,
        log,
        aborted: None,
    })
}

fn best_or_last(state: TrainState) -> ModelParams {
    match state.best {
        Some((p, _)) => p,
        None => state.params,
    }
}
