//! Choosing the CDG weight `beta` from labeled validation traces.
//!
//! The scale `r_b = mu_C / |mu_plus - mu_minus|` compares the typical mean
//! confidence with how far apart correct and wrong traces sit in CDG; values
//! of `beta` in `[0.5 r_b, 1.5 r_b]` make `beta * cdg` comparable to the mean.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confidence::{ConfidenceError, FeatureParams, TraceFeatures};
use crate::trace_io::{normalize_answer, QuestionBundle};
use crate::voting::{vote_candidates, Candidate, VoteConfig, VoteError, VoteMethod};

/// Published `r_b` values for the four reasoning models of the original
/// evaluation. Reference metadata only; they need the real traces to recompute.
pub const REFERENCE_R_B: [(&str, f64); 4] = [
    ("DeepSeek-R1-8B", 7.87),
    ("gpt-oss-20B", 8.70),
    ("Gemma-3-27B", 6.64),
    ("QwQ-32B", 4.39),
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("no correct traces in the calibration pool")]
    NoCorrectTraces,
    #[error("no wrong traces in the calibration pool")]
    NoWrongTraces,
    #[error("correct and wrong traces have the same mean CDG; r_b is undefined")]
    ZeroSeparation,
    #[error("trace '{0}' carries no correctness label")]
    UnlabeledTrace(String),
    #[error("rotating calibration needs at least 2 datasets, got {0}")]
    TooFewDatasets(usize),
    #[error("beta grid is empty")]
    EmptyGrid,
    #[error("trace '{trace_id}': {source}")]
    Confidence {
        trace_id: String,
        source: ConfidenceError,
    },
    #[error(transparent)]
    Vote(#[from] VoteError),
}

/// How expectations are pooled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Unweighted means over all traces.
    #[default]
    Traces,
    /// Per-question means first, then the mean over questions.
    Questions,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationEstimate {
    pub mu_c: f64,
    pub mu_plus: f64,
    pub mu_minus: f64,
    pub delta_mu: f64,
    pub r_b: f64,
    pub beta_band: [f64; 2],
    pub n_correct: usize,
    pub n_wrong: usize,
    pub pooling: Pooling,
}

/// `(correct, features)` per trace, grouped by question.
pub type LabeledGroup = Vec<(bool, TraceFeatures)>;

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

pub fn estimate_from_features(groups: &[LabeledGroup], pooling: Pooling) -> Result<CalibrationEstimate, CalibrationError> {
    let all = || groups.iter().flatten();
    let n_correct = all().filter(|(c, _)| *c).count();
    let n_wrong = all().filter(|(c, _)| !*c).count();
    if n_correct == 0 {
        return Err(CalibrationError::NoCorrectTraces);
    }
    if n_wrong == 0 {
        return Err(CalibrationError::NoWrongTraces);
    }
    let (mu_c, mu_plus, mu_minus) = match pooling {
        Pooling::Traces => {
            let conf: Vec<f64> = all().map(|(_, f)| f.mean_conf).collect();
            let plus: Vec<f64> = all().filter(|(c, _)| *c).map(|(_, f)| f.cdg).collect();
            let minus: Vec<f64> = all().filter(|(c, _)| !*c).map(|(_, f)| f.cdg).collect();
            (mean(&conf), mean(&plus), mean(&minus))
        }
        Pooling::Questions => {
            let per_question = |pick: &dyn Fn(&(bool, TraceFeatures)) -> Option<f64>| {
                let means: Vec<f64> = groups
                    .iter()
                    .filter_map(|g| mean(&g.iter().filter_map(pick).collect::<Vec<_>>()))
                    .collect();
                mean(&means)
            };
            (
                per_question(&|(_, f)| Some(f.mean_conf)),
                per_question(&|(c, f)| c.then_some(f.cdg)),
                per_question(&|(c, f)| (!c).then_some(f.cdg)),
            )
        }
    };
    let (mu_c, mu_plus, mu_minus) = (mu_c.unwrap(), mu_plus.unwrap(), mu_minus.unwrap());
    let delta_mu = (mu_plus - mu_minus).abs();
    if delta_mu == 0.0 {
        return Err(CalibrationError::ZeroSeparation);
    }
    let r_b = mu_c / delta_mu;
    Ok(CalibrationEstimate {
        mu_c,
        mu_plus,
        mu_minus,
        delta_mu,
        r_b,
        beta_band: [0.5 * r_b, 1.5 * r_b],
        n_correct,
        n_wrong,
        pooling,
    })
}

/// Features and labels for every trace of every bundle.
pub fn labeled_features(bundles: &[QuestionBundle], params: &FeatureParams) -> Result<Vec<LabeledGroup>, CalibrationError> {
    bundles
        .iter()
        .map(|b| {
            b.traces
                .iter()
                .map(|t| {
                    let correct = t
                        .correct
                        .ok_or_else(|| CalibrationError::UnlabeledTrace(t.trace_id.clone()))?;
                    let f = TraceFeatures::compute(t, params).map_err(|source| CalibrationError::Confidence {
                        trace_id: t.trace_id.clone(),
                        source,
                    })?;
                    Ok((correct, f))
                })
                .collect()
        })
        .collect()
}

pub fn estimate_r_b(
    bundles: &[QuestionBundle],
    params: &FeatureParams,
    pooling: Pooling,
) -> Result<CalibrationEstimate, CalibrationError> {
    estimate_from_features(&labeled_features(bundles, params)?, pooling)
}

/// How the held-out dataset's `beta` is derived from its calibration pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum BetaRule {
    /// `beta = multiple * r_b`.
    RbMultiple { multiple: f64 },
    /// Best CDG accuracy on the pool over `values`; with `relative`, each
    /// value is a multiple of the pool's `r_b`.
    Grid { values: Vec<f64>, relative: bool },
}

impl Default for BetaRule {
    fn default() -> Self {
        BetaRule::RbMultiple { multiple: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct NamedDataset {
    pub name: String,
    pub bundles: Vec<QuestionBundle>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub beta: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaAssignment {
    pub held_out: String,
    pub calibrated_on: Vec<String>,
    pub estimate: CalibrationEstimate,
    pub beta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<GridPoint>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub rule: BetaRule,
    pub pooling: Pooling,
    pub assignments: Vec<BetaAssignment>,
}

struct PreparedQuestion {
    truth: String,
    trace_ids: Vec<String>,
    answers: Vec<String>,
    labeled: LabeledGroup,
}

fn prepare(bundles: &[QuestionBundle], params: &FeatureParams) -> Result<Vec<PreparedQuestion>, CalibrationError> {
    let groups = labeled_features(bundles, params)?;
    Ok(bundles
        .iter()
        .zip(groups)
        .map(|(b, labeled)| PreparedQuestion {
            truth: b.question.canonical_ground_truth(),
            trace_ids: b.traces.iter().map(|t| t.trace_id.clone()).collect(),
            answers: b.traces.iter().map(|t| t.answer_canonical.clone()).collect(),
            labeled,
        })
        .collect())
}

fn pool_accuracy(pool: &[&PreparedQuestion], config: &VoteConfig) -> Result<f64, CalibrationError> {
    let mut hits = 0usize;
    for q in pool {
        let candidates: Vec<Candidate<'_>> = q
            .labeled
            .iter()
            .enumerate()
            .map(|(i, (_, f))| Candidate {
                trace_id: &q.trace_ids[i],
                answer: &q.answers[i],
                features: Some(f),
            })
            .collect();
        let sel = vote_candidates("", &candidates, config)?;
        if normalize_answer(&sel.answer) == q.truth {
            hits += 1;
        }
    }
    Ok(hits as f64 / pool.len().max(1) as f64)
}

/// Picks the best-accuracy grid point; ties go to the value nearest `r_b`,
/// then to the smaller value.
fn best_grid_point(points: &[GridPoint], r_b: f64) -> f64 {
    points
        .iter()
        .min_by(|a, b| {
            b.accuracy
                .total_cmp(&a.accuracy)
                .then((a.beta - r_b).abs().total_cmp(&(b.beta - r_b).abs()))
                .then(a.beta.total_cmp(&b.beta))
        })
        .map(|p| p.beta)
        .unwrap_or(r_b)
}

/// Leave-one-dataset-out calibration: each dataset's `beta` comes only from
/// the other datasets. `base` supplies alpha, bins and percent for grid votes.
pub fn rotating_calibration(
    datasets: &[NamedDataset],
    rule: &BetaRule,
    base: &VoteConfig,
    pooling: Pooling,
) -> Result<CalibrationReport, CalibrationError> {
    if datasets.len() < 2 {
        return Err(CalibrationError::TooFewDatasets(datasets.len()));
    }
    if let BetaRule::Grid { values, .. } = rule {
        if values.is_empty() {
            return Err(CalibrationError::EmptyGrid);
        }
    }
    let params = base.feature_params();
    let prepared = datasets
        .iter()
        .map(|d| prepare(&d.bundles, &params))
        .collect::<Result<Vec<_>, _>>()?;

    let mut assignments = Vec::with_capacity(datasets.len());
    for (held, held_set) in datasets.iter().enumerate() {
        let others: Vec<usize> = (0..datasets.len()).filter(|&i| i != held).collect();
        let pool: Vec<&PreparedQuestion> = others.iter().flat_map(|&i| prepared[i].iter()).collect();
        let groups: Vec<LabeledGroup> = pool.iter().map(|q| q.labeled.clone()).collect();
        let estimate = estimate_from_features(&groups, pooling)?;
        let (beta, grid) = match rule {
            BetaRule::RbMultiple { multiple } => (multiple * estimate.r_b, None),
            BetaRule::Grid { values, relative } => {
                let points = values
                    .iter()
                    .map(|&v| {
                        let beta = if *relative { v * estimate.r_b } else { v };
                        let cfg = VoteConfig {
                            method: VoteMethod::Cdg,
                            beta,
                            ..*base
                        };
                        Ok(GridPoint {
                            beta,
                            accuracy: pool_accuracy(&pool, &cfg)?,
                        })
                    })
                    .collect::<Result<Vec<_>, CalibrationError>>()?;
                (best_grid_point(&points, estimate.r_b), Some(points))
            }
        };
        assignments.push(BetaAssignment {
            held_out: held_set.name.clone(),
            calibrated_on: others.iter().map(|&i| datasets[i].name.clone()).collect(),
            estimate,
            beta,
            grid,
        });
    }
    Ok(CalibrationReport {
        rule: rule.clone(),
        pooling,
        assignments,
    })
}
