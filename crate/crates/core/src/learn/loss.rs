//! Label-smoothing cross entropy and the pairwise hinge loss, both with
//! analytic gradients.

use crate::error::{Error, Result};

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// K-class cross entropy against the smoothed target
/// `(1 - eps) * onehot(class) + eps / K`; returns `(loss, dL/dlogits)`.
pub fn smoothed_ce_k(logits: &[f64], class: usize, epsilon: f64) -> Result<(f64, Vec<f64>)> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite logits".into()));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::InvalidInput(format!(
            "epsilon {epsilon} not in [0, 1)"
        )));
    }
    let k = logits.len();
    if class >= k {
        return Err(Error::InvalidInput(format!(
            "class {class} out of range for {k} logits"
        )));
    }
    let probs = softmax(logits);
    let uniform = epsilon / k as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(k);
    for (i, &p) in probs.iter().enumerate() {
        let target = uniform + if i == class { 1.0 - epsilon } else { 0.0 };
        loss -= target * p.ln();
        grad.push(p - target);
    }
    Ok((loss, grad))
}

/// Binary case used by the pointwise ranker; `label` selects the true class.
pub fn smoothed_ce_loss(logits: &[f64; 2], label: u8, epsilon: f64) -> Result<(f64, [f64; 2])> {
    let (loss, grad) = smoothed_ce_k(logits, label as usize, epsilon)?;
    Ok((loss, [grad[0], grad[1]]))
}

/// `max(0, margin - s_pos + s_neg)` with the subgradient
/// `(-1, +1)` when active and `(0, 0)` otherwise; a tie at the boundary is
/// treated as inactive.
pub fn hinge_pair_loss(s_pos: f64, s_neg: f64, margin: f64) -> Result<(f64, f64, f64)> {
    if !s_pos.is_finite() || !s_neg.is_finite() || !margin.is_finite() {
        return Err(Error::InvalidInput("non-finite hinge input".into()));
    }
    if margin < 0.0 {
        return Err(Error::InvalidInput(format!(
            "margin {margin} must be >= 0"
        )));
    }
    let raw = margin - s_pos + s_neg;
    if raw > 0.0 {
        Ok((raw, -1.0, 1.0))
    } else {
        Ok((0.0, 0.0, 0.0))
    }
}
