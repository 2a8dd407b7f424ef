//! Token confidence, position-normalized binning and the confidence dynamic gain.

use std::ops::Range;

use serde::Serialize;
use thiserror::Error;

use crate::trace_io::{Payload, TraceRecord};

pub const MIN_TRACE_TOKENS: usize = 10;
pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_PERCENT: f64 = 10.0;
pub const DEFAULT_TAIL_WINDOW: usize = 2048;
pub const DEFAULT_TOP_K: usize = 20;
/// Smallest probability accepted by [`exact_kl_confidence`].
pub const PROB_FLOOR: f64 = 1e-300;
const DISTRIBUTION_TOL: f64 = 1e-9;
const PERCENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfidenceError {
    #[error("empty logprob vector")]
    EmptyVector,
    #[error("non-finite value at index {index}")]
    NonFiniteValue { index: usize },
    #[error("positive logprob {value} at index {index}")]
    PositiveLogprob { index: usize, value: f64 },
    #[error("negative confidence {value} at index {index}")]
    NegativeConfidence { index: usize, value: f64 },
    #[error("probabilities sum to {sum}, not 1")]
    NotADistribution { sum: f64 },
    #[error("probability {value} at index {index} is below the floor {PROB_FLOOR:e}")]
    ZeroProbability { index: usize, value: f64 },
    #[error("{tokens} tokens cannot fill {bins} bins")]
    TooFewTokens { tokens: usize, bins: usize },
    #[error("bin count must be at least 2, got {0}")]
    InvalidBinCount(usize),
    #[error("percent {percent} does not select whole bins out of {bins} (or exceeds 50)")]
    InvalidPercent { percent: f64, bins: usize },
    #[error("only {survivors} tokens survive the mask, minimum is {MIN_TRACE_TOKENS}")]
    MaskedTooShort { survivors: usize },
    #[error("mask has {mask} entries for {tokens} tokens")]
    MaskLengthMismatch { mask: usize, tokens: usize },
    #[error("trace has {tokens} tokens, minimum is {MIN_TRACE_TOKENS}")]
    TraceTooShort { tokens: usize },
}

/// Negated mean of a top-K logprob vector.
pub fn token_confidence(logprobs: &[f64]) -> Result<f64, ConfidenceError> {
    if logprobs.is_empty() {
        return Err(ConfidenceError::EmptyVector);
    }
    let mut sum = 0.0;
    for (index, &lp) in logprobs.iter().enumerate() {
        if !lp.is_finite() {
            return Err(ConfidenceError::NonFiniteValue { index });
        }
        if lp > 0.0 {
            return Err(ConfidenceError::PositiveLogprob { index, value: lp });
        }
        sum += lp;
    }
    Ok(-sum / logprobs.len() as f64)
}

/// KL divergence of the uniform distribution from `probs`, i.e.
/// `-(1/V) * sum_j ln(V * p_j)`. Zero exactly at the uniform distribution.
pub fn exact_kl_confidence(probs: &[f64]) -> Result<f64, ConfidenceError> {
    if probs.is_empty() {
        return Err(ConfidenceError::EmptyVector);
    }
    let mut total = 0.0;
    for (index, &p) in probs.iter().enumerate() {
        if !p.is_finite() {
            return Err(ConfidenceError::NonFiniteValue { index });
        }
        total += p;
    }
    if (total - 1.0).abs() > DISTRIBUTION_TOL {
        return Err(ConfidenceError::NotADistribution { sum: total });
    }
    if let Some((index, &value)) = probs.iter().enumerate().find(|(_, &p)| p < PROB_FLOOR) {
        return Err(ConfidenceError::ZeroProbability { index, value });
    }
    let v = probs.len() as f64;
    let sum: f64 = probs.iter().map(|&p| (v * p).ln()).sum();
    // Rounding can leave a tiny negative residue at the uniform point.
    Ok((-sum / v).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceSource {
    ComputedFromTopk,
    Precomputed,
}

/// Per-token confidences of one trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceTrajectory {
    values: Vec<f64>,
    source: ConfidenceSource,
    excluded_positions: usize,
}

impl ConfidenceTrajectory {
    pub fn new(values: Vec<f64>, source: ConfidenceSource) -> Result<Self, ConfidenceError> {
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(ConfidenceError::NonFiniteValue { index });
            }
            if value < 0.0 {
                return Err(ConfidenceError::NegativeConfidence { index, value });
            }
        }
        if values.len() < MIN_TRACE_TOKENS {
            return Err(ConfidenceError::TraceTooShort {
                tokens: values.len(),
            });
        }
        Ok(Self {
            values,
            source,
            excluded_positions: 0,
        })
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self, ConfidenceError> {
        Self::new(values, ConfidenceSource::Precomputed)
    }

    pub fn from_record(record: &TraceRecord) -> Result<Self, ConfidenceError> {
        match &record.payload {
            Payload::TopK(tokens) => {
                let values = tokens
                    .iter()
                    .map(|t| token_confidence(&t.logprobs))
                    .collect::<Result<Vec<_>, _>>()?;
                Self::new(values, ConfidenceSource::ComputedFromTopk)
            }
            Payload::Confidences(values) => Self::new(values.clone(), ConfidenceSource::Precomputed),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn source(&self) -> ConfidenceSource {
        self.source
    }

    pub fn excluded_positions(&self) -> usize {
        self.excluded_positions
    }
}

pub fn mean_confidence(trajectory: &ConfidenceTrajectory) -> f64 {
    mean(trajectory.values())
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Keeps positions whose mask entry is `true`, in order.
pub fn apply_mask(
    trajectory: &ConfidenceTrajectory,
    mask: &[bool],
) -> Result<ConfidenceTrajectory, ConfidenceError> {
    if mask.len() != trajectory.len() {
        return Err(ConfidenceError::MaskLengthMismatch {
            mask: mask.len(),
            tokens: trajectory.len(),
        });
    }
    let values: Vec<f64> = trajectory
        .values
        .iter()
        .zip(mask)
        .filter_map(|(&v, &keep)| keep.then_some(v))
        .collect();
    if values.len() < MIN_TRACE_TOKENS {
        return Err(ConfidenceError::MaskedTooShort {
            survivors: values.len(),
        });
    }
    let dropped = trajectory.len() - values.len();
    Ok(ConfidenceTrajectory {
        values,
        source: trajectory.source,
        excluded_positions: trajectory.excluded_positions + dropped,
    })
}

/// Mean over the last `min(window, T)` tokens.
pub fn tail_window_confidence(trajectory: &ConfidenceTrajectory, window: usize) -> f64 {
    let window = window.max(1).min(trajectory.len());
    mean(&trajectory.values[trajectory.len() - window..])
}

/// Zero-based token ranges of the `n` position-normalized bins over `t` tokens.
/// Bin `i` (1-based) holds positions `floor((i-1)t/n) < pos <= floor(i t/n)`.
pub fn bin_bounds(t: usize, n: usize) -> Result<Vec<Range<usize>>, ConfidenceError> {
    if n < 2 {
        return Err(ConfidenceError::InvalidBinCount(n));
    }
    if t < n {
        return Err(ConfidenceError::TooFewTokens { tokens: t, bins: n });
    }
    Ok((1..=n).map(|i| (i - 1) * t / n..i * t / n).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinnedTrajectory {
    pub bin_means: Vec<f64>,
    pub bin_sizes: Vec<usize>,
    pub tokens: usize,
}

impl BinnedTrajectory {
    pub fn bins(&self) -> usize {
        self.bin_means.len()
    }

    /// Real-valued bin width `T / N`.
    pub fn width(&self) -> f64 {
        self.tokens as f64 / self.bins() as f64
    }
}

pub fn bin_trajectory(
    trajectory: &ConfidenceTrajectory,
    n: usize,
) -> Result<BinnedTrajectory, ConfidenceError> {
    bin_values(trajectory.values(), n)
}

pub(crate) fn bin_values(values: &[f64], n: usize) -> Result<BinnedTrajectory, ConfidenceError> {
    let bounds = bin_bounds(values.len(), n)?;
    Ok(BinnedTrajectory {
        bin_means: bounds.iter().map(|r| mean(&values[r.clone()])).collect(),
        bin_sizes: bounds.iter().map(|r| r.len()).collect(),
        tokens: values.len(),
    })
}

/// Number of whole bins covered by `percent` of `bins`.
pub fn percent_bins(percent: f64, bins: usize) -> Result<usize, ConfidenceError> {
    let invalid = ConfidenceError::InvalidPercent { percent, bins };
    if !percent.is_finite() || percent <= 0.0 || percent > 50.0 {
        return Err(invalid);
    }
    let exact = percent * bins as f64 / 100.0;
    let rounded = exact.round();
    if (exact - rounded).abs() > PERCENT_TOL || rounded < 1.0 {
        return Err(invalid);
    }
    Ok(rounded as usize)
}

/// Mean of the last `percent` of bins minus the mean of the first `percent`.
pub fn confidence_dynamic_gain(binned: &BinnedTrajectory, percent: f64) -> Result<f64, ConfidenceError> {
    let m = percent_bins(percent, binned.bins())?;
    let head = mean(&binned.bin_means[..m]);
    let tail = mean(&binned.bin_means[binned.bins() - m..]);
    Ok(tail - head)
}

/// Mean of the last `percent` of bins, without the head subtraction.
pub fn tail_bins_mean(binned: &BinnedTrajectory, percent: f64) -> Result<f64, ConfidenceError> {
    let m = percent_bins(percent, binned.bins())?;
    Ok(mean(&binned.bin_means[binned.bins() - m..]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeatureParams {
    pub bins: usize,
    pub percent: f64,
    pub tail_window: usize,
    /// Drop tokens whose record mask is `false` before computing features.
    pub use_mask: bool,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            percent: DEFAULT_PERCENT,
            tail_window: DEFAULT_TAIL_WINDOW,
            use_mask: false,
        }
    }
}

/// Per-trace statistics consumed by voting and calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceFeatures {
    pub mean_conf: f64,
    pub cdg: f64,
    pub tail_bins_mean: f64,
    pub tail_window_conf: f64,
    pub length: usize,
}

impl TraceFeatures {
    pub fn from_trajectory(
        trajectory: &ConfidenceTrajectory,
        params: &FeatureParams,
    ) -> Result<Self, ConfidenceError> {
        let binned = bin_trajectory(trajectory, params.bins)?;
        Ok(Self {
            mean_conf: mean_confidence(trajectory),
            cdg: confidence_dynamic_gain(&binned, params.percent)?,
            tail_bins_mean: tail_bins_mean(&binned, params.percent)?,
            tail_window_conf: tail_window_confidence(trajectory, params.tail_window),
            length: trajectory.len(),
        })
    }

    pub fn compute(record: &TraceRecord, params: &FeatureParams) -> Result<Self, ConfidenceError> {
        let mut trajectory = ConfidenceTrajectory::from_record(record)?;
        if params.use_mask {
            if let Some(mask) = &record.mask {
                trajectory = apply_mask(&trajectory, mask)?;
            }
        }
        Self::from_trajectory(&trajectory, params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn traj(values: Vec<f64>) -> ConfidenceTrajectory {
        ConfidenceTrajectory::from_values(values).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn token_confidence_values() {
        let c = token_confidence(&[0.05f64.ln(); 20]).unwrap();
        assert!((c - 2.995732273553991).abs() < 1e-12);
        assert!(close(token_confidence(&[-0.1, -2.3]).unwrap(), 1.2));
        assert_eq!(token_confidence(&[0.0]).unwrap(), 0.0);
        assert_eq!(token_confidence(&[]), Err(ConfidenceError::EmptyVector));
        assert_eq!(
            token_confidence(&[-1.0, f64::NAN]),
            Err(ConfidenceError::NonFiniteValue { index: 1 })
        );
    }

    #[test]
    fn exact_kl_values() {
        assert_eq!(exact_kl_confidence(&[0.25; 4]).unwrap(), 0.0);
        let c = exact_kl_confidence(&[0.9, 0.1]).unwrap();
        let expected = -0.5 * (1.8f64.ln() + 0.2f64.ln());
        assert!(close(c, expected));
        assert!((c - 0.5108256237659907).abs() < 1e-12);
        let eps = 1e-12;
        let c = exact_kl_confidence(&[1.0 - 2.0 * eps, eps, eps]).unwrap();
        assert!(c.is_finite() && c > 10.0);
        assert!(matches!(
            exact_kl_confidence(&[0.5, 0.6]),
            Err(ConfidenceError::NotADistribution { .. })
        ));
        assert!(matches!(
            exact_kl_confidence(&[1.0, 0.0]),
            Err(ConfidenceError::ZeroProbability { index: 1, .. })
        ));
    }

    #[test]
    fn mean_confidence_examples() {
        assert_eq!(mean_confidence(&traj(vec![3.5; 17])), 3.5);
        assert_eq!(mean_confidence(&traj((1..=10).map(f64::from).collect())), 5.5);
        assert_eq!(mean_confidence(&traj(vec![0.0; 10])), 0.0);
    }

    #[test]
    fn binning_examples() {
        let values: Vec<f64> = (1..=10).map(f64::from).collect();
        let b = bin_trajectory(&traj(values.clone()), 10).unwrap();
        assert_eq!(b.bin_means, values);
        let b = bin_values(&[1.0; 25], 10).unwrap();
        assert_eq!(b.bin_sizes, vec![2, 3, 2, 3, 2, 3, 2, 3, 2, 3]);
        assert_eq!(b.width(), 2.5);
        assert_eq!(
            bin_values(&[1.0; 9], 10),
            Err(ConfidenceError::TooFewTokens { tokens: 9, bins: 10 })
        );
    }

    #[test]
    fn bin_membership_matches_floor_rule() {
        // Position-by-position membership, computed with real arithmetic.
        for t in [10usize, 11, 25, 37, 101] {
            let n = 10;
            let b = t as f64 / n as f64;
            let bounds = bin_bounds(t, n).unwrap();
            for pos in 1..=t {
                let bin = (1..=n)
                    .find(|&i| ((i - 1) as f64 * b).floor() < pos as f64 && pos as f64 <= (i as f64 * b).floor())
                    .unwrap();
                assert!(bounds[bin - 1].contains(&(pos - 1)), "t={t} pos={pos}");
            }
        }
    }

    #[test]
    fn cdg_examples() {
        let constant = bin_values(&[2.0; 10], 10).unwrap();
        assert_eq!(confidence_dynamic_gain(&constant, 10.0).unwrap(), 0.0);

        let mut means = vec![1.0; 10];
        means[0] = 0.5;
        means[9] = 2.5;
        let b = bin_values(&means, 10).unwrap();
        assert_eq!(confidence_dynamic_gain(&b, 10.0).unwrap(), 2.0);

        let ramp = bin_values(&(1..=10).map(f64::from).collect::<Vec<_>>(), 10).unwrap();
        assert_eq!(confidence_dynamic_gain(&ramp, 20.0).unwrap(), 8.0);
        assert_eq!(tail_bins_mean(&ramp, 20.0).unwrap(), 9.5);
    }

    #[test]
    fn invalid_percent() {
        let b = bin_values(&[1.0; 10], 10).unwrap();
        for p in [5.0, 15.0, 60.0, 0.0, -10.0, f64::NAN] {
            assert!(matches!(
                confidence_dynamic_gain(&b, p),
                Err(ConfidenceError::InvalidPercent { .. })
            ));
        }
        assert_eq!(percent_bins(50.0, 10).unwrap(), 5);
        assert_eq!(percent_bins(5.0, 20).unwrap(), 1);
    }

    #[test]
    fn tail_window_examples() {
        let t = traj((1..=10).map(f64::from).collect());
        assert_eq!(tail_window_confidence(&t, 2048), mean_confidence(&t));
        let mut v = vec![0.0; 10];
        v.extend([2.0; 10]);
        assert_eq!(tail_window_confidence(&traj(v), 10), 2.0);
        let t = traj((1..=20).map(f64::from).collect());
        assert_eq!(tail_window_confidence(&t, 4), 18.5);
    }

    #[test]
    fn mask_examples() {
        let t = traj((1..=12).map(f64::from).collect());
        assert_eq!(apply_mask(&t, &[true; 12]).unwrap().values(), t.values());
        let mut mask = vec![true; 12];
        mask[10] = false;
        mask[11] = false;
        let m = apply_mask(&t, &mask).unwrap();
        assert_eq!(m.values(), &t.values()[..10]);
        assert_eq!(m.excluded_positions(), 2);
        mask[0] = false;
        assert_eq!(
            apply_mask(&t, &mask),
            Err(ConfidenceError::MaskedTooShort { survivors: 9 })
        );
    }

    #[test]
    fn features_from_record_honor_mask_flag() {
        let mut values: Vec<f64> = vec![1.0; 10];
        values.extend([9.0, 9.0]);
        let mut mask = vec![true; 10];
        mask.extend([false, false]);
        let record = TraceRecord::new(
            "q",
            "t",
            "1",
            None,
            Payload::Confidences(values),
            Some(mask),
            None,
        )
        .unwrap();
        let plain = TraceFeatures::compute(&record, &FeatureParams::default()).unwrap();
        assert_eq!(plain.length, 12);
        let masked = TraceFeatures::compute(
            &record,
            &FeatureParams {
                use_mask: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(masked.length, 10);
        assert_eq!(masked.cdg, 0.0);
        assert_eq!(masked.tail_window_conf, 1.0);
    }

    fn arb_values(min: usize, max: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..20.0, min..max)
    }

    proptest! {
        #[test]
        fn token_confidence_permutation_invariant(mut lp in prop::collection::vec(-20.0f64..=0.0, 1..30), seed in any::<u64>()) {
            let before = token_confidence(&lp).unwrap();
            let n = lp.len();
            lp.rotate_left((seed as usize) % n);
            lp.reverse();
            prop_assert!((token_confidence(&lp).unwrap() - before).abs() < 1e-12);
        }

        #[test]
        fn token_confidence_decreases_toward_zero(lp in prop::collection::vec(-20.0f64..-0.01, 1..30), idx in any::<prop::sample::Index>(), frac in 0.01f64..1.0) {
            let before = token_confidence(&lp).unwrap();
            let mut raised = lp.clone();
            let i = idx.index(lp.len());
            raised[i] *= 1.0 - frac;
            prop_assert!(token_confidence(&raised).unwrap() < before);
        }

        #[test]
        fn exact_kl_nonnegative_and_shift_invariant(logits in prop::collection::vec(-8.0f64..8.0, 2..50), shift in -50.0f64..50.0) {
            let softmax = |l: &[f64]| {
                let m = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = l.iter().map(|x| (x - m).exp()).collect();
                let z: f64 = e.iter().sum();
                e.into_iter().map(|x| x / z).collect::<Vec<_>>()
            };
            let a = exact_kl_confidence(&softmax(&logits)).unwrap();
            let shifted: Vec<f64> = logits.iter().map(|x| x + shift).collect();
            let b = exact_kl_confidence(&softmax(&shifted)).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn bins_cover_disjointly(t in 10usize..10_000) {
            let bounds = bin_bounds(t, 10).unwrap();
            prop_assert_eq!(bounds[0].start, 0);
            prop_assert_eq!(bounds[9].end, t);
            for w in bounds.windows(2) {
                prop_assert_eq!(w[0].end, w[1].start);
            }
            let sizes: Vec<usize> = bounds.iter().map(|r| r.len()).collect();
            prop_assert_eq!(sizes.iter().sum::<usize>(), t);
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            prop_assert!(*sizes.iter().min().unwrap() >= 1);
        }

        #[test]
        fn cdg_antisymmetric_under_reversal(
            values in (1usize..30).prop_flat_map(|m| arb_values(10 * m, 10 * m + 1)),
            pct in prop::sample::select(vec![10.0, 20.0, 30.0, 40.0, 50.0]),
        ) {
            // Reversal maps the partition onto itself only when every bin has the same size.
            let fwd = confidence_dynamic_gain(&bin_values(&values, 10).unwrap(), pct).unwrap();
            let mut rev = values.clone();
            rev.reverse();
            let back = confidence_dynamic_gain(&bin_values(&rev, 10).unwrap(), pct).unwrap();
            prop_assert!((fwd + back).abs() < 1e-9);
        }

        #[test]
        fn cdg_sign_follows_monotone_trend(values in prop::collection::btree_set(0u32..100_000, 10..300)) {
            let inc: Vec<f64> = values.iter().map(|&v| v as f64 / 100.0).collect();
            let dec: Vec<f64> = inc.iter().rev().cloned().collect();
            prop_assert!(confidence_dynamic_gain(&bin_values(&inc, 10).unwrap(), 10.0).unwrap() > 0.0);
            prop_assert!(confidence_dynamic_gain(&bin_values(&dec, 10).unwrap(), 10.0).unwrap() < 0.0);
        }

        #[test]
        fn masked_mean_matches_filtered_mean(values in arb_values(10, 100), seed in any::<u64>()) {
            let n = values.len();
            let mask: Vec<bool> = (0..n).map(|i| (seed >> (i % 64)) & 1 == 1 || i < 10).collect();
            let filtered: Vec<f64> = values.iter().zip(&mask).filter(|(_, &m)| m).map(|(&v, _)| v).collect();
            let oracle = filtered.iter().sum::<f64>() / filtered.len() as f64;
            let masked = apply_mask(&traj(values), &mask).unwrap();
            prop_assert!((mean_confidence(&masked) - oracle).abs() < 1e-12);
        }
    }
}
