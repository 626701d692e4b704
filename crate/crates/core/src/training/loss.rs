//! Categorical cross-entropy over integer labels.

use candle_core::{DType, Tensor, D};

use crate::{Error, Result};

/// Probabilities are clamped to this before taking the log.
pub const PROB_EPS: f64 = 1e-7;

fn label_tensor(labels: &[u32], num_classes: usize, batch: usize, device: &candle_core::Device) -> Result<Tensor> {
    if labels.len() != batch {
        return Err(Error::Shape {
            expected: format!("{batch} labels"),
            actual: format!("{}", labels.len()),
        });
    }
    if let Some(bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
        return Err(Error::Training(format!("label {bad} out of range for {num_classes} classes")));
    }
    Ok(Tensor::from_slice(labels, batch, device)?)
}

/// Mean cross-entropy from raw logits `(B, C)`, computed with log-softmax.
pub fn cross_entropy(logits: &Tensor, labels: &[u32]) -> Result<Tensor> {
    let (b, c) = logits.dims2()?;
    let targets = label_tensor(labels, c, b, logits.device())?;
    let log_probs = candle_nn::ops::log_softmax(logits, D::Minus1)?;
    let picked = log_probs.gather(&targets.unsqueeze(1)?, 1)?;
    Ok(picked.neg()?.mean_all()?)
}

/// Mean cross-entropy from probabilities `(B, C)`.
pub fn cross_entropy_from_probs(probs: &Tensor, labels: &[u32]) -> Result<Tensor> {
    let (b, c) = probs.dims2()?;
    let targets = label_tensor(labels, c, b, probs.device())?;
    let picked = probs.gather(&targets.unsqueeze(1)?, 1)?.clamp(PROB_EPS, 1.0)?;
    Ok(picked.log()?.neg()?.mean_all()?)
}

/// Same as [`cross_entropy_from_probs`] on host rows, accumulated in f64.
pub fn cross_entropy_rows(probs: &[Vec<f32>], labels: &[u32]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::Shape {
            expected: format!("{} labels", probs.len()),
            actual: format!("{}", labels.len()),
        });
    }
    if probs.is_empty() {
        return Err(Error::Training("cross-entropy of an empty batch".into()));
    }
    let mut total = 0.0;
    for (row, &l) in probs.iter().zip(labels) {
        let p = *row
            .get(l as usize)
            .ok_or_else(|| Error::Training(format!("label {l} out of range for {} classes", row.len())))?;
        total -= (p as f64).clamp(PROB_EPS, 1.0).ln();
    }
    Ok(total / probs.len() as f64)
}

pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}
