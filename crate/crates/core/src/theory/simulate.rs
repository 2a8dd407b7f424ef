//! Monte Carlo check of the gain separation produced by one round of updates.
//!
//! Each trial builds a count table, turns it into per-group logit updates and
//! reads confidences through softmax. Correct traces see the base logits plus
//! the correct-group update at every position; wrong traces see the base plus
//! the wrong-group update. The gain of each group is the confidence at the
//! answer position minus the mean over the head window.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use super::counts::{build_count_table, check_invariants, logit_updates, reinforcement_ratios, CountTable};
use super::logits::confidence_from_logits;
use super::{grpo_advantages, separation_lower_bound, BaseLogits, GrpoBatchConfig, SeparationBound, TheoryError};
use crate::seed::StreamSeed;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialReport {
    pub trial: u64,
    pub answer_convergence: bool,
    pub reasoning_diversity: bool,
    pub concentration_gap: bool,
    pub wrong_ratio: f64,
    pub ratio_correct: f64,
    pub ratio_incorrect: f64,
    /// Trace-weighted wrong-trace head count divided by `sqrt(k (G - k))`.
    pub wrong_head_scale: f64,
    pub delta_c_correct: f64,
    pub delta_c_incorrect: f64,
    pub separation: f64,
    pub separation_positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub trials: usize,
    pub mean_separation: f64,
    pub min_separation: f64,
    pub max_separation: f64,
    pub all_positive: bool,
    pub all_invariants: bool,
    pub max_ratio_incorrect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub config: GrpoBatchConfig,
    pub seed: u64,
    pub bound: SeparationBound,
    pub trials: Vec<TrialReport>,
    pub summary: SimulationSummary,
}

fn base_logits<R: Rng + ?Sized>(config: &GrpoBatchConfig, rng: &mut R) -> Result<Vec<Vec<f64>>, TheoryError> {
    match config.base {
        BaseLogits::Uniform => Ok(vec![vec![0.0; config.vocab]; config.positions]),
        BaseLogits::Random { scale } => {
            let normal = Normal::new(0.0, scale).map_err(|e| TheoryError::InvalidConfig(e.to_string()))?;
            Ok((0..config.positions)
                .map(|_| (0..config.vocab).map(|_| normal.sample(rng)).collect())
                .collect())
        }
    }
}

fn gain(base: &[Vec<f64>], update: &[Vec<f64>], config: &GrpoBatchConfig) -> Result<f64, TheoryError> {
    let conf = |t: usize| -> Result<f64, TheoryError> {
        let logits: Vec<f64> = base[t].iter().zip(&update[t]).map(|(b, u)| b + u).collect();
        Ok(confidence_from_logits(&logits, config.top_k)?.truncated)
    };
    let head_len = config.head_len();
    let mut head = 0.0;
    for t in 0..head_len {
        head += conf(t)?;
    }
    Ok(conf(config.positions - 1)? - head / head_len as f64)
}

fn wrong_head_scale(table: &CountTable, config: &GrpoBatchConfig) -> f64 {
    let last = table.positions() - 1;
    let wrong = (config.group_size - config.correct) as f64;
    let sq: f64 = table.n_minus[..last]
        .iter()
        .flatten()
        .map(|&n| n as f64 * n as f64)
        .sum();
    let expected = sq / (last as f64 * wrong);
    expected / ((config.correct as f64) * wrong).sqrt()
}

fn run_trial(config: &GrpoBatchConfig, seed: u64, trial: u64) -> Result<TrialReport, TheoryError> {
    let mut rng = StreamSeed::new(seed).text("simulate").index(trial).rng();
    let table = build_count_table(config, &mut rng)?;
    let invariants = check_invariants(&table, config);
    let ratios = reinforcement_ratios(&table)?;
    let adv = grpo_advantages(config.group_size, config.correct)?;
    let updates = logit_updates(&table, &adv, config.eta_eff, config.c);
    let base = base_logits(config, &mut rng)?;
    let delta_c_correct = gain(&base, &updates.correct, config)?;
    let delta_c_incorrect = gain(&base, &updates.incorrect, config)?;
    let separation = delta_c_correct - delta_c_incorrect;
    Ok(TrialReport {
        trial,
        answer_convergence: invariants.answer_convergence,
        reasoning_diversity: invariants.reasoning_diversity,
        concentration_gap: invariants.concentration_gap,
        wrong_ratio: invariants.wrong_ratio.unwrap_or(f64::NAN),
        ratio_correct: ratios.correct,
        ratio_incorrect: ratios.incorrect,
        wrong_head_scale: wrong_head_scale(&table, config),
        delta_c_correct,
        delta_c_incorrect,
        separation,
        separation_positive: separation > 0.0,
    })
}

pub fn simulate_confidence_separation(
    config: &GrpoBatchConfig,
    trials: usize,
    seed: u64,
) -> Result<SimulationReport, TheoryError> {
    config.validate()?;
    if trials == 0 {
        return Err(TheoryError::InvalidConfig("need at least one trial".into()));
    }
    let reports = (0..trials as u64)
        .map(|t| run_trial(config, seed, t))
        .collect::<Result<Vec<_>, _>>()?;
    let seps: Vec<f64> = reports.iter().map(|r| r.separation).collect();
    let summary = SimulationSummary {
        trials,
        mean_separation: seps.iter().sum::<f64>() / trials as f64,
        min_separation: seps.iter().copied().fold(f64::INFINITY, f64::min),
        max_separation: seps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        all_positive: reports.iter().all(|r| r.separation_positive),
        all_invariants: reports
            .iter()
            .all(|r| r.answer_convergence && r.reasoning_diversity && r.concentration_gap),
        max_ratio_incorrect: reports.iter().map(|r| r.ratio_incorrect).fold(f64::NEG_INFINITY, f64::max),
    };
    Ok(SimulationReport {
        config: config.clone(),
        seed,
        bound: separation_lower_bound(config),
        trials: reports,
        summary,
    })
}
