//! Branch losses with analytic gradients.
//!
//! All vectors are post-softmax class probabilities ordered
//! `(negative, positive)`. Logs are natural logs with arguments clamped
//! below at [`LOG_CLAMP`].
//!
//! The checked entry points validate that inputs lie on the simplex. The
//! `*_unchecked` variants skip that and accept any finite vector, which is
//! what the trainer (softmax outputs) and finite-difference checks use.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::label::{Label, Probs};

pub const LOG_CLAMP: f64 = 1e-12;
const SIMPLEX_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Contrastive margin `m`.
    pub margin: f64,
    /// Weight `alpha` of the consensus term in each branch loss.
    pub alpha: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            margin: 1.0,
            alpha: 0.5,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::parameter("margin must be > 0"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::parameter("alpha must be >= 0"));
        }
        Ok(())
    }
}

/// Value and gradients of the consensus loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusLoss {
    pub loss: f64,
    pub grad_sen: Probs,
    pub grad_spec: Probs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchLoss {
    pub loss: f64,
    pub cross_entropy: f64,
    /// Unweighted consensus loss (the branch loss adds `alpha` times this).
    pub consensus: f64,
    pub grad_pred: Probs,
    pub grad_partner: Probs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionLoss {
    pub loss: f64,
    /// Gradient with respect to each prediction, uncertainty held constant.
    pub grads: Vec<Probs>,
}

/// The SenBranch/SpecBranch outputs for one sample plus the fused output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchOutputs {
    pub y_sen: Probs,
    pub y_spec: Probs,
    pub y_fusion: Probs,
    /// Cosine uncertainty of `y_sen` vs `y_spec`.
    pub uncertainty: f64,
}

/// Checks that `p` is a probability vector.
pub fn check_probs(name: &str, p: &Probs) -> Result<()> {
    let sum: f64 = p.iter().sum();
    if p.iter().any(|x| !x.is_finite() || *x < -SIMPLEX_TOL) || libm::fabs(sum - 1.0) > SIMPLEX_TOL
    {
        return Err(Error::contract(format!(
            "{name} is not a probability vector: {p:?}"
        )));
    }
    Ok(())
}

/// Contrastive consensus loss between the Sen and Spec outputs.
///
/// `½·a·‖Δ‖² + ½·(1−a)·max(0, m − ‖Δ‖)²` with `Δ = y_sen − y_spec`. The
/// hinge gradient is zero at `‖Δ‖ ≥ m` (the kink included) and at `Δ = 0`.
pub fn consensus_loss(
    y_sen: &Probs,
    y_spec: &Probs,
    consensus: bool,
    margin: f64,
) -> Result<ConsensusLoss> {
    check_probs("y_sen", y_sen)?;
    check_probs("y_spec", y_spec)?;
    if margin.is_nan() || margin <= 0.0 {
        return Err(Error::parameter("margin must be > 0"));
    }
    Ok(consensus_loss_unchecked(y_sen, y_spec, consensus, margin))
}

pub fn consensus_loss_unchecked(
    y_sen: &Probs,
    y_spec: &Probs,
    consensus: bool,
    margin: f64,
) -> ConsensusLoss {
    let delta = [y_sen[0] - y_spec[0], y_sen[1] - y_spec[1]];
    let sq = delta[0] * delta[0] + delta[1] * delta[1];
    let (loss, scale) = if consensus {
        (0.5 * sq, 1.0)
    } else {
        let dist = libm::sqrt(sq);
        let gap = margin - dist;
        if gap > 0.0 {
            // d/dΔ ½(m − ‖Δ‖)² = −(m − ‖Δ‖)·Δ/‖Δ‖
            let scale = if dist > 0.0 { -gap / dist } else { 0.0 };
            (0.5 * gap * gap, scale)
        } else {
            (0.0, 0.0)
        }
    };
    let grad_sen = [scale * delta[0], scale * delta[1]];
    ConsensusLoss {
        loss,
        grad_sen,
        grad_spec: [-grad_sen[0], -grad_sen[1]],
    }
}

/// `0.5·(1 − cos(y_sen, y_spec))`, in `[0, 0.5]` for non-negative inputs.
pub fn uncertainty(y_sen: &Probs, y_spec: &Probs) -> Result<f64> {
    let na = norm(y_sen);
    let nb = norm(y_spec);
    if !(na > 0.0 && nb > 0.0) || !na.is_finite() || !nb.is_finite() {
        return Err(Error::contract(
            "uncertainty needs two non-zero finite vectors",
        ));
    }
    Ok(uncertainty_unchecked(y_sen, y_spec))
}

pub fn uncertainty_unchecked(y_sen: &Probs, y_spec: &Probs) -> f64 {
    let cos = (y_sen[0] * y_spec[0] + y_sen[1] * y_spec[1]) / (norm(y_sen) * norm(y_spec));
    0.5 * (1.0 - cos.clamp(-1.0, 1.0))
}

/// Cross-entropy on a hard label plus `alpha` times the consensus loss
/// against the partner branch.
pub fn branch_loss(
    y_pred: &Probs,
    label: Label,
    partner: &Probs,
    consensus: bool,
    config: &LossConfig,
) -> Result<BranchLoss> {
    check_probs("y_pred", y_pred)?;
    check_probs("partner", partner)?;
    config.validate()?;
    Ok(branch_loss_unchecked(
        y_pred, label, partner, consensus, config,
    ))
}

pub fn branch_loss_unchecked(
    y_pred: &Probs,
    label: Label,
    partner: &Probs,
    consensus: bool,
    config: &LossConfig,
) -> BranchLoss {
    let k = label.index();
    let p = y_pred[k];
    let cross_entropy = -clamped_ln(p);
    let mut grad_pred = [0.0; 2];
    if p > LOG_CLAMP {
        grad_pred[k] = -1.0 / p;
    }
    let mut grad_partner = [0.0; 2];
    let mut con = 0.0;
    if config.alpha != 0.0 {
        let c = consensus_loss_unchecked(y_pred, partner, consensus, config.margin);
        con = c.loss;
        for j in 0..2 {
            grad_pred[j] += config.alpha * c.grad_sen[j];
            grad_partner[j] = config.alpha * c.grad_spec[j];
        }
    }
    BranchLoss {
        loss: cross_entropy + config.alpha * con,
        cross_entropy,
        consensus: con,
        grad_pred,
        grad_partner,
    }
}

/// Uncertainty-weighted KL divergence `KL(y ‖ y′)` over a batch:
/// `Σᵢ (1+uᵢ)·Σⱼ yᵢⱼ(ln yᵢⱼ − ln y′ᵢⱼ) / Σᵢ (1+uᵢ)`.
pub fn fusion_loss(preds: &[Probs], soft: &[Probs], u: &[f64]) -> Result<FusionLoss> {
    if preds.len() != soft.len() || preds.len() != u.len() {
        return Err(Error::parameter(format!(
            "batch length mismatch: {} predictions, {} soft labels, {} weights",
            preds.len(),
            soft.len(),
            u.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::parameter("empty batch"));
    }
    for (i, (p, y)) in preds.iter().zip(soft).enumerate() {
        check_probs(&format!("prediction {i}"), p)?;
        check_probs(&format!("soft label {i}"), y)?;
    }
    if let Some(bad) = u.iter().find(|x| !(0.0..=0.5).contains(*x)) {
        return Err(Error::parameter(format!(
            "uncertainty {bad} outside [0, 0.5]"
        )));
    }
    Ok(fusion_loss_unchecked(preds, soft, u))
}

pub fn fusion_loss_unchecked(preds: &[Probs], soft: &[Probs], u: &[f64]) -> FusionLoss {
    let total_weight: f64 = u.iter().map(|x| 1.0 + x).sum();
    let mut loss = 0.0;
    let grads = preds
        .iter()
        .zip(soft)
        .zip(u)
        .map(|((p, y), ui)| {
            let w = (1.0 + ui) / total_weight;
            let mut g = [0.0; 2];
            for j in 0..2 {
                if y[j] > 0.0 {
                    loss += w * y[j] * (clamped_ln(y[j]) - clamped_ln(p[j]));
                    if p[j] > LOG_CLAMP {
                        g[j] = -w * y[j] / p[j];
                    }
                }
            }
            g
        })
        .collect();
    FusionLoss { loss, grads }
}

fn clamped_ln(x: f64) -> f64 {
    libm::log(x.max(LOG_CLAMP))
}

fn norm(p: &Probs) -> f64 {
    libm::sqrt(p[0] * p[0] + p[1] * p[1])
}
