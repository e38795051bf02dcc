use crate::error::{Error, Result};

/// Numerically stable softmax: returns `(probs, log_probs)` computed with
/// max subtraction. Errors on non-finite logits.
pub fn softmax_logprob(logits: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if logits.is_empty() {
        return Err(Error::validation("softmax over empty logits"));
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("softmax logits"));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = logits.iter().map(|&x| x - max).collect();
    let sum: f64 = shifted.iter().map(|&x| x.exp()).sum();
    let log_sum = sum.ln();
    let log_probs: Vec<f64> = shifted.iter().map(|&x| x - log_sum).collect();
    let probs: Vec<f64> = log_probs.iter().map(|&lp| lp.exp()).collect();
    Ok((probs, log_probs))
}
