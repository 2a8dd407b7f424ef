//! Evaluation, resampling and experiment plumbing around the voting rules.

mod experiment;
mod output;
mod synthetic;

pub use experiment::{
    bins_for_percent, direction_rows, method_comparisons, run_experiment, AccuracyRow, BetaSweepRow, CalibrationRow, DirectionRow, ExperimentConfig,
    ExperimentReport, Failure, HistogramRow, LengthSplitRow, MaskAgreementRow, PassAtOneRow, PercentSweepRow,
    SummaryRow, TraceFeatureRow,
};
pub use output::{write_report, OutputFormat};
pub use synthetic::{generate_synthetic_benchmark, SyntheticBenchmark, SyntheticConfig, SyntheticPayload, TraceTarget};

use std::collections::BTreeMap;

use rand::seq::index::sample;
use serde::Serialize;
use thiserror::Error;

use crate::calibration::CalibrationError;
use crate::seed::StreamSeed;
use crate::trace_io::{QuestionBundle, QuestionManifest, TraceIoError};
use crate::voting::{Selection, VoteError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("selection for unknown question '{0}'")]
    UnknownQuestion(String),
    #[error("trace '{0}' carries no correctness label")]
    UnlabeledTraces(String),
    #[error("budget {budget} exceeds the {pool} traces of question '{question_id}'")]
    BudgetExceedsPool {
        question_id: String,
        budget: usize,
        pool: usize,
    },
    #[error("selection sets cover different questions")]
    QuestionSetMismatch,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Vote(#[from] VoteError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    TraceIo(#[from] TraceIoError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evaluation {
    pub correct: usize,
    pub questions: usize,
    pub accuracy: f64,
}

/// Share of selections whose canonical answer equals the ground truth.
pub fn evaluate(selections: &[Selection], manifest: &[QuestionManifest]) -> Result<Evaluation, HarnessError> {
    let truths: BTreeMap<&str, String> = manifest
        .iter()
        .map(|q| (q.question_id.as_str(), q.canonical_ground_truth()))
        .collect();
    let mut correct = 0;
    for s in selections {
        let truth = truths
            .get(s.question_id.as_str())
            .ok_or_else(|| HarnessError::UnknownQuestion(s.question_id.clone()))?;
        if &s.answer == truth {
            correct += 1;
        }
    }
    Ok(Evaluation {
        correct,
        questions: selections.len(),
        accuracy: if selections.is_empty() { 0.0 } else { correct as f64 / selections.len() as f64 },
    })
}

/// Mean over questions of the per-question share of correct traces.
pub fn pass_at_1(bundles: &[QuestionBundle]) -> Result<f64, HarnessError> {
    let mut total = 0.0;
    let mut questions = 0usize;
    for b in bundles.iter().filter(|b| !b.is_empty()) {
        let mut hits = 0usize;
        for t in &b.traces {
            match t.correct {
                Some(true) => hits += 1,
                Some(false) => {}
                None => return Err(HarnessError::UnlabeledTraces(t.trace_id.clone())),
            }
        }
        total += hits as f64 / b.len() as f64;
        questions += 1;
    }
    Ok(if questions == 0 { 0.0 } else { total / questions as f64 })
}

/// Sorted positions of a uniform without-replacement draw of `budget` out of
/// `pool`, keyed by `(master_seed, question_id, budget, run)`.
pub fn subsample_indices(
    question_id: &str,
    pool: usize,
    budget: usize,
    master_seed: u64,
    run: u64,
) -> Result<Vec<usize>, HarnessError> {
    if budget > pool || budget == 0 {
        return Err(HarnessError::BudgetExceedsPool {
            question_id: question_id.to_owned(),
            budget,
            pool,
        });
    }
    if budget == pool {
        return Ok((0..pool).collect());
    }
    let mut rng = StreamSeed::new(master_seed)
        .text(question_id)
        .index(budget as u64)
        .index(run)
        .rng();
    let mut idx = sample(&mut rng, pool, budget).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// `budget` traces of the bundle, in their original order.
pub fn subsample_budget(
    bundle: &QuestionBundle,
    budget: usize,
    master_seed: u64,
    run: u64,
) -> Result<QuestionBundle, HarnessError> {
    let idx = subsample_indices(bundle.question_id(), bundle.len(), budget, master_seed, run)?;
    Ok(QuestionBundle {
        question: bundle.question.clone(),
        traces: idx.into_iter().map(|i| bundle.traces[i].clone()).collect(),
    })
}

/// Trace positions ordered by `(length, trace_id)`; the first `ceil(n / 2)`
/// form the short pool.
pub fn length_split_indices(bundle: &QuestionBundle) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..bundle.len()).collect();
    order.sort_by(|&a, &b| {
        let (ta, tb) = (&bundle.traces[a], &bundle.traces[b]);
        ta.token_count()
            .cmp(&tb.token_count())
            .then_with(|| ta.trace_id.cmp(&tb.trace_id))
    });
    let long = order.split_off(bundle.len().div_ceil(2));
    (order, long)
}

/// Short and long pools; an odd middle trace goes to the short pool.
pub fn length_split(bundle: &QuestionBundle) -> (QuestionBundle, QuestionBundle) {
    let (short, long) = length_split_indices(bundle);
    let pool = |idx: Vec<usize>| QuestionBundle {
        question: bundle.question.clone(),
        traces: idx.into_iter().map(|i| bundle.traces[i].clone()).collect(),
    };
    (pool(short), pool(long))
}

/// Share of questions on which both selection sets chose the same answer.
pub fn selection_agreement(a: &[Selection], b: &[Selection]) -> Result<f64, HarnessError> {
    let index = |s: &[Selection]| -> Result<BTreeMap<String, String>, HarnessError> {
        let mut map = BTreeMap::new();
        for sel in s {
            if map.insert(sel.question_id.clone(), sel.answer.clone()).is_some() {
                return Err(HarnessError::QuestionSetMismatch);
            }
        }
        Ok(map)
    };
    let (ma, mb) = (index(a)?, index(b)?);
    if !ma.keys().eq(mb.keys()) {
        return Err(HarnessError::QuestionSetMismatch);
    }
    if ma.is_empty() {
        return Ok(1.0);
    }
    let same = ma.iter().zip(mb.values()).filter(|((_, x), y)| x == y).count();
    Ok(same as f64 / ma.len() as f64)
}
