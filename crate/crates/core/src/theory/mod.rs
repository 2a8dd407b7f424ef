//! Toy model of how group-relative policy optimization shapes confidence
//! trajectories.
//!
//! Rewards are binary within a group of `G` sampled answers of which `k` are
//! correct. Token logits move by advantage-weighted token counts; correct
//! traces converge on one answer token while their early tokens are spread
//! over `M` approaches, and wrong traces stay fragmented. The modules here
//! build such count tables, apply the updates, read confidences back through
//! softmax, and compare the resulting gain separation with its closed-form
//! lower bound.

mod counts;
mod logits;
mod simulate;

pub use counts::{
    build_count_table, check_invariants, config_updates, expected_group_update, logit_updates,
    reinforcement_ratios, CountTable, InvariantReport, LogitUpdates, ReinforcementRatios,
};
pub use logits::{check_confidence_logit_bound, confidence_from_logits, log_softmax, BoundCheck, LogitConfidence};
pub use simulate::{simulate_confidence_separation, SimulationReport, SimulationSummary, TrialReport};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TheoryError {
    #[error("group with k={k} of G={g} correct has zero reward variance")]
    DegenerateGroup { g: usize, k: usize },
    #[error("infeasible configuration: {0}")]
    InfeasibleConfig(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("head positions carry no mass")]
    ZeroHeadMass,
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Starting logits before training updates are added.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BaseLogits {
    Uniform,
    /// Independent normal logits with the given standard deviation, drawn
    /// once per trial and shared by both trace groups.
    Random { scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrpoBatchConfig {
    /// Group size `G`.
    pub group_size: usize,
    /// Correct answers `k` in the group.
    pub correct: usize,
    /// Number of distinct valid approaches `M`.
    pub approaches: usize,
    /// Concentration gap `gamma` bounding the wrong-trace tail/head ratio by `gamma * M`.
    pub gamma: f64,
    /// Trace length `T`; position `T` holds the answer token.
    pub positions: usize,
    pub vocab: usize,
    pub top_k: usize,
    pub eta_eff: f64,
    pub c: f64,
    /// Wrong answers the incorrect traces spread over at position `T`.
    pub distractors: usize,
    /// The head window is the first bin of a partition of `T` positions into this many bins.
    pub head_bins: usize,
    pub base: BaseLogits,
}

impl Default for GrpoBatchConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            correct: 4,
            approaches: 2,
            gamma: 0.5,
            positions: 10,
            vocab: 100,
            top_k: 20,
            eta_eff: 1.0,
            c: 1.0,
            distractors: 4,
            head_bins: 10,
            base: BaseLogits::Uniform,
        }
    }
}

impl GrpoBatchConfig {
    pub fn validate(&self) -> Result<(), TheoryError> {
        let bad = |m: String| Err(TheoryError::InvalidConfig(m));
        if self.group_size < 2 {
            return bad(format!("group size {} < 2", self.group_size));
        }
        if self.correct == 0 || self.correct >= self.group_size {
            return Err(TheoryError::DegenerateGroup {
                g: self.group_size,
                k: self.correct,
            });
        }
        if self.approaches < 2 {
            return bad(format!("need at least 2 approaches, got {}", self.approaches));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma {} outside (0, 1)", self.gamma));
        }
        if self.positions < 2 {
            return bad("need at least 2 positions".into());
        }
        if self.distractors == 0 {
            return bad("need at least one distractor".into());
        }
        if self.vocab < self.approaches.max(self.distractors) + 1 {
            return bad(format!(
                "vocabulary of {} cannot hold the answer token plus {} approach / {} distractor tokens",
                self.vocab, self.approaches, self.distractors
            ));
        }
        if self.top_k == 0 || self.top_k > self.vocab {
            return bad(format!("top_k {} outside 1..={}", self.top_k, self.vocab));
        }
        if !(self.eta_eff.is_finite() && self.eta_eff >= 0.0) {
            return bad("eta_eff must be finite and non-negative".into());
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            return bad("c must be finite and positive".into());
        }
        if self.head_bins == 0 {
            return bad("head_bins must be positive".into());
        }
        if let BaseLogits::Random { scale } = self.base {
            if !(scale.is_finite() && scale >= 0.0) {
                return bad("random base scale must be finite and non-negative".into());
            }
        }
        Ok(())
    }

    /// Number of leading positions averaged as the head window.
    pub fn head_len(&self) -> usize {
        (self.positions / self.head_bins).clamp(1, self.positions - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrpoAdvantages {
    pub a_correct: f64,
    pub a_incorrect: f64,
    pub mean_reward: f64,
    pub sigma_r: f64,
}

/// Group-normalized advantages for binary rewards with `k` of `g` correct.
pub fn grpo_advantages(g: usize, k: usize) -> Result<GrpoAdvantages, TheoryError> {
    if k == 0 || k >= g {
        return Err(TheoryError::DegenerateGroup { g, k });
    }
    let (gf, kf) = (g as f64, k as f64);
    Ok(GrpoAdvantages {
        a_correct: ((gf - kf) / kf).sqrt(),
        a_incorrect: -(kf / (gf - kf)).sqrt(),
        mean_reward: kf / gf,
        sigma_r: (kf * (gf - kf)).sqrt() / gf,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeparationBound {
    pub value: f64,
    /// Whether `gamma > 1 / M^2`, the condition for a positive bound.
    pub positive: bool,
}

/// Lower bound `c * eta * sqrt(k (G - k)) * (gamma M - 1/M)` on the expected
/// gain separation between correct and wrong traces.
pub fn separation_lower_bound(config: &GrpoBatchConfig) -> SeparationBound {
    let m = config.approaches as f64;
    let (g, k) = (config.group_size as f64, config.correct as f64);
    let value = config.c * config.eta_eff * (k * (g - k)).sqrt() * (config.gamma * m - 1.0 / m);
    SeparationBound {
        value,
        positive: config.gamma * m * m > 1.0,
    }
}
