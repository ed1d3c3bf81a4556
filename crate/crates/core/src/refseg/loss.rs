//! Instance-matching training objective.
//!
//! The candidate with the lowest mask matching cost
//! `γ_mask·L_mask + γ_dice·L_dice` is matched to the ground truth; every
//! other candidate is pushed towards "not the referred object" through
//! `γ_cls·BCE(p̂_j, 0)`. The matched candidate contributes no
//! classification term unless `include_matched_cls` is set.

use super::{
    same_dims, BinaryMaskVolume, LossWeights, PredictionCandidate, PredictionSet, SegError,
    SoftMaskVolume,
};

#[inline]
fn clamp_prob(p: f64, w: &LossWeights) -> f64 {
    p.clamp(w.prob_clamp, 1.0 - w.prob_clamp)
}

/// Binary cross-entropy of a probability against a 0/1 target.
pub fn bce_loss(p: f64, target: bool, w: &LossWeights) -> f64 {
    let q = clamp_prob(p, w);
    if target {
        -q.ln()
    } else {
        -(1.0 - q).ln()
    }
}

/// Mean per-pixel binary cross-entropy.
pub fn mask_ce_loss(
    pred: &SoftMaskVolume,
    gt: &BinaryMaskVolume,
    w: &LossWeights,
) -> Result<f64, SegError> {
    same_dims(pred.dims(), gt.dims())?;
    let sum: f64 = pred
        .probs()
        .iter()
        .zip(gt.bits())
        .map(|(&p, &g)| bce_loss(p, g, w))
        .sum();
    Ok(sum / pred.probs().len() as f64)
}

/// `1 − (2·Σ p·g + ε) / (Σ p + Σ g + ε)`.
pub fn dice_loss(
    pred: &SoftMaskVolume,
    gt: &BinaryMaskVolume,
    w: &LossWeights,
) -> Result<f64, SegError> {
    same_dims(pred.dims(), gt.dims())?;
    let (inter, sum) = dice_sums(pred, gt);
    Ok(1.0 - (2.0 * inter + w.dice_epsilon) / (sum + w.dice_epsilon))
}

/// (Σ p·g, Σ p + Σ g)
fn dice_sums(pred: &SoftMaskVolume, gt: &BinaryMaskVolume) -> (f64, f64) {
    pred.probs()
        .iter()
        .zip(gt.bits())
        .fold((0.0, 0.0), |(i, s), (&p, &g)| {
            let g = if g { 1.0 } else { 0.0 };
            (i + p * g, s + p + g)
        })
}

pub fn match_cost(
    c: &PredictionCandidate,
    gt: &BinaryMaskVolume,
    w: &LossWeights,
) -> Result<f64, SegError> {
    Ok(w.gamma_mask * mask_ce_loss(&c.mask, gt, w)? + w.gamma_dice * dice_loss(&c.mask, gt, w)?)
}

/// Index of the lowest matching cost; the first one wins ties.
pub fn select_best(
    set: &PredictionSet,
    gt: &BinaryMaskVolume,
    w: &LossWeights,
) -> Result<usize, SegError> {
    let mut best = (0, f64::INFINITY);
    for (i, c) in set.candidates().iter().enumerate() {
        let cost = match_cost(c, gt, w)?;
        if cost < best.1 {
            best = (i, cost);
        }
    }
    Ok(best.0)
}

/// Returns the loss and the matched candidate index.
pub fn total_loss(
    set: &PredictionSet,
    gt: &BinaryMaskVolume,
    w: &LossWeights,
) -> Result<(f64, usize), SegError> {
    let matched = select_best(set, gt, w)?;
    let cands = set.candidates();
    let mut loss = match_cost(&cands[matched], gt, w)?;
    if w.include_matched_cls {
        loss += w.gamma_cls * bce_loss(cands[matched].confidence, true, w);
    }
    for (j, c) in cands.iter().enumerate() {
        if j != matched {
            loss += w.gamma_cls * bce_loss(c.confidence, false, w);
        }
    }
    Ok((loss, matched))
}

/// Partial derivatives of [`total_loss`] with the matched index held fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradients {
    pub matched: usize,
    /// ∂L/∂p̂_j for every candidate.
    pub confidence: Vec<f64>,
    /// ∂L/∂probs for every candidate's mask, same layout as the mask.
    pub masks: Vec<Vec<f64>>,
}

/// d/dp of `bce(p, target)`; zero where the clamp is active.
fn bce_grad(p: f64, target: bool, w: &LossWeights) -> f64 {
    if p <= w.prob_clamp || p >= 1.0 - w.prob_clamp {
        return 0.0;
    }
    if target {
        -1.0 / p
    } else {
        1.0 / (1.0 - p)
    }
}

pub fn loss_gradients(
    set: &PredictionSet,
    gt: &BinaryMaskVolume,
    w: &LossWeights,
) -> Result<LossGradients, SegError> {
    let matched = select_best(set, gt, w)?;
    let cands = set.candidates();
    let n_px = set.dims().len() as f64;

    let confidence = cands
        .iter()
        .enumerate()
        .map(|(j, c)| {
            if j != matched {
                w.gamma_cls * bce_grad(c.confidence, false, w)
            } else if w.include_matched_cls {
                w.gamma_cls * bce_grad(c.confidence, true, w)
            } else {
                0.0
            }
        })
        .collect();

    let mut masks: Vec<Vec<f64>> = cands
        .iter()
        .map(|c| vec![0.0; c.mask.probs().len()])
        .collect();
    let pred = &cands[matched].mask;
    let (inter, sum) = dice_sums(pred, gt);
    let denom = sum + w.dice_epsilon;
    let numer = 2.0 * inter + w.dice_epsilon;
    for ((g_out, &p), &g) in masks[matched].iter_mut().zip(pred.probs()).zip(gt.bits()) {
        let gv = if g { 1.0 } else { 0.0 };
        let d_ce = bce_grad(p, g, w) / n_px;
        // d/dp [1 − numer/denom] = −(2g·denom − numer) / denom²
        let d_dice = -(2.0 * gv * denom - numer) / (denom * denom);
        *g_out = w.gamma_mask * d_ce + w.gamma_dice * d_dice;
    }

    Ok(LossGradients {
        matched,
        confidence,
        masks,
    })
}
