//! Confidence read back from logits, and the single-token increment bound.

use serde::Serialize;

use super::TheoryError;

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&x| x - lse).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogitConfidence {
    /// Negative mean of the top-K log-probabilities.
    pub truncated: f64,
    /// KL divergence from uniform to the full distribution.
    pub exact: f64,
}

fn check_logits(logits: &[f64], k: usize) -> Result<(), TheoryError> {
    if logits.is_empty() {
        return Err(TheoryError::InvalidInput("empty logit vector".into()));
    }
    if let Some(i) = logits.iter().position(|x| !x.is_finite()) {
        return Err(TheoryError::InvalidInput(format!("non-finite logit at index {i}")));
    }
    if k == 0 || k > logits.len() {
        return Err(TheoryError::InvalidInput(format!("K={k} outside 1..={}", logits.len())));
    }
    Ok(())
}

/// Indices of the `k` largest values, ties broken by lower index.
fn top_k_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

fn truncated_over(logp: &[f64], set: &[usize]) -> f64 {
    -set.iter().map(|&i| logp[i]).sum::<f64>() / set.len() as f64
}

pub fn confidence_from_logits(logits: &[f64], k: usize) -> Result<LogitConfidence, TheoryError> {
    check_logits(logits, k)?;
    let logp = log_softmax(logits);
    let v = logp.len() as f64;
    let mean_logp = logp.iter().sum::<f64>() / v;
    Ok(LogitConfidence {
        truncated: truncated_over(&logp, &top_k_indices(&logp, k)),
        exact: (-v.ln() - mean_logp).max(0.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub delta_c: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Raises logit `v` by `delta` and compares the change in truncated
/// confidence over the original top-K set with `(1/K) * delta / (1 + e^delta)`.
pub fn check_confidence_logit_bound(logits: &[f64], v: usize, delta: f64, k: usize) -> Result<BoundCheck, TheoryError> {
    check_logits(logits, k)?;
    if v >= logits.len() {
        return Err(TheoryError::InvalidInput(format!("token {v} outside vocabulary of {}", logits.len())));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(TheoryError::InvalidInput(format!("increment {delta} must be finite and positive")));
    }
    let before = log_softmax(logits);
    let set = top_k_indices(&before, k);
    if !set.contains(&v) {
        return Err(TheoryError::PreconditionViolated(format!("token {v} is not in the top-{k} set")));
    }
    let p_v = before[v].exp();
    if p_v < 1.0 / k as f64 {
        return Err(TheoryError::PreconditionViolated(format!("p_v = {p_v} < 1/K = {}", 1.0 / k as f64)));
    }
    let mut raised = logits.to_vec();
    raised[v] += delta;
    let after = log_softmax(&raised);
    let mut new_set = top_k_indices(&after, k);
    let mut old_set = set.clone();
    new_set.sort_unstable();
    old_set.sort_unstable();
    if new_set != old_set {
        return Err(TheoryError::PreconditionViolated("top-K set changed after the increment".into()));
    }
    let delta_c = truncated_over(&after, &set) - truncated_over(&before, &set);
    let bound = delta / (k as f64 * (1.0 + delta.exp()));
    Ok(BoundCheck {
        delta_c,
        bound,
        holds: delta_c >= bound,
    })
}
