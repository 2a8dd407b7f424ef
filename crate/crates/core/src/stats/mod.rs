//! Significance tests and summary tables for comparing voting methods and
//! correct/wrong trace populations.

mod nonparametric;
pub mod special;

pub use nonparametric::{mann_whitney_u, wilcoxon_signed_rank, MWU_EXACT_MAX_TOTAL, WILCOXON_EXACT_MAX_N};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use special::student_t_cdf;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("sample contains a non-finite value")]
    NonFiniteValue,
    #[error("all differences are zero")]
    AllZeroDifferences,
    #[error("pooled variance is zero")]
    DegenerateVariance,
    #[error("all differences are equal")]
    DegenerateDifferences,
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("no {0} traces")]
    EmptyGroup(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    TwoSided,
    Greater,
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    MannWhitneyU,
    WilcoxonSignedRank,
    PairedT,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatResult {
    pub test: TestKind,
    pub statistic: f64,
    pub p_value: f64,
    pub alternative: Alternative,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub effect_size: Option<f64>,
    pub exact: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeros_dropped: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub df: Option<f64>,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with the `n - 1` denominator.
fn sample_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

/// Standardized mean difference `(mean_a - mean_b) / pooled_sd`.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(StatsError::TooFewObservations { needed: 2, got: s.len() });
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFiniteValue);
        }
    }
    let (n, m) = (a.len() as f64, b.len() as f64);
    let pooled = ((n - 1.0) * sample_variance(a) + (m - 1.0) * sample_variance(b)) / (n + m - 2.0);
    if pooled <= 0.0 {
        return Err(StatsError::DegenerateVariance);
    }
    Ok((mean(a) - mean(b)) / pooled.sqrt())
}

/// One-sample t-test of paired differences against zero.
pub fn paired_t_test(differences: &[f64], alternative: Alternative) -> Result<StatResult, StatsError> {
    let n = differences.len();
    if n < 2 {
        return Err(StatsError::TooFewObservations { needed: 2, got: n });
    }
    if differences.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFiniteValue);
    }
    if differences.iter().all(|&d| d == differences[0]) {
        return Err(StatsError::DegenerateDifferences);
    }
    let sd = sample_variance(differences).sqrt();
    let t = mean(differences) / (sd / (n as f64).sqrt());
    let df = (n - 1) as f64;
    let p_value = match alternative {
        Alternative::Less => student_t_cdf(t, df),
        Alternative::Greater => student_t_cdf(-t, df),
        Alternative::TwoSided => (2.0 * student_t_cdf(-t.abs(), df)).min(1.0),
    };
    Ok(StatResult {
        test: TestKind::PairedT,
        statistic: t,
        p_value,
        alternative,
        n,
        m: None,
        effect_size: None,
        exact: false,
        zeros_dropped: None,
        df: Some(df),
    })
}

/// `***` below 0.001, `**` below 0.01, `*` below 0.05.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct DirectionCounts {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

impl DirectionCounts {
    fn add(&mut self, cdg: f64) {
        if cdg > 0.0 {
            self.positive += 1;
        } else if cdg < 0.0 {
            self.negative += 1;
        } else {
            self.zero += 1;
        }
    }

    pub fn total(&self) -> usize {
        self.positive + self.negative + self.zero
    }

    fn fraction(&self, k: usize) -> f64 {
        k as f64 / self.total() as f64
    }
}

/// Sign breakdown of CDG within correct and wrong traces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirectionSummary {
    pub frac_positive_correct: f64,
    pub frac_negative_correct: f64,
    pub frac_zero_correct: f64,
    pub frac_positive_wrong: f64,
    pub frac_negative_wrong: f64,
    pub frac_zero_wrong: f64,
    pub correct: DirectionCounts,
    pub wrong: DirectionCounts,
}

/// `traces` holds `(correct, cdg)` pairs.
pub fn direction_analysis(traces: &[(bool, f64)]) -> Result<DirectionSummary, StatsError> {
    let mut correct = DirectionCounts::default();
    let mut wrong = DirectionCounts::default();
    for &(is_correct, cdg) in traces {
        if !cdg.is_finite() {
            return Err(StatsError::NonFiniteValue);
        }
        if is_correct {
            correct.add(cdg);
        } else {
            wrong.add(cdg);
        }
    }
    if correct.total() == 0 {
        return Err(StatsError::EmptyGroup("correct"));
    }
    if wrong.total() == 0 {
        return Err(StatsError::EmptyGroup("wrong"));
    }
    Ok(DirectionSummary {
        frac_positive_correct: correct.fraction(correct.positive),
        frac_negative_correct: correct.fraction(correct.negative),
        frac_zero_correct: correct.fraction(correct.zero),
        frac_positive_wrong: wrong.fraction(wrong.positive),
        frac_negative_wrong: wrong.fraction(wrong.negative),
        frac_zero_wrong: wrong.fraction(wrong.zero),
        correct,
        wrong,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WinTieLoss {
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
    pub mean_delta: f64,
}

/// Tallies `(method, baseline)` accuracy pairs.
pub fn win_tie_loss(pairs: &[(f64, f64)]) -> Result<WinTieLoss, StatsError> {
    if pairs.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let mut out = WinTieLoss {
        wins: 0,
        ties: 0,
        losses: 0,
        mean_delta: 0.0,
    };
    for &(method, baseline) in pairs {
        if method > baseline {
            out.wins += 1;
        } else if method < baseline {
            out.losses += 1;
        } else {
            out.ties += 1;
        }
    }
    out.mean_delta = pairs.iter().map(|(m, b)| m - b).sum::<f64>() / pairs.len() as f64;
    Ok(out)
}

/// CDG separation between correct and wrong traces for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationRow {
    pub label: String,
    pub n_correct: usize,
    pub n_wrong: usize,
    pub mu_plus: f64,
    pub mu_minus: f64,
    pub d: Option<f64>,
    pub u: f64,
    /// Mann-Whitney p for "correct traces have larger CDG".
    pub p_one_sided: f64,
    pub p_two_sided: f64,
    pub exact: bool,
    /// Stars from the two-sided p-value.
    pub sig: &'static str,
    pub sig_one_sided: &'static str,
}

pub fn separation_row(label: &str, correct_cdg: &[f64], wrong_cdg: &[f64]) -> Result<SeparationRow, StatsError> {
    let one = mann_whitney_u(correct_cdg, wrong_cdg, Alternative::Greater)?;
    let two = mann_whitney_u(correct_cdg, wrong_cdg, Alternative::TwoSided)?;
    Ok(SeparationRow {
        label: label.to_owned(),
        n_correct: correct_cdg.len(),
        n_wrong: wrong_cdg.len(),
        mu_plus: mean(correct_cdg),
        mu_minus: mean(wrong_cdg),
        d: cohens_d(correct_cdg, wrong_cdg).ok(),
        u: one.statistic,
        p_one_sided: one.p_value,
        p_two_sided: two.p_value,
        exact: one.exact,
        sig: significance_stars(two.p_value),
        sig_one_sided: significance_stars(one.p_value),
    })
}

/// Method-versus-baseline comparison over paired accuracy observations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub label: String,
    pub n: usize,
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
    pub mean_delta: f64,
    pub d: Option<f64>,
    /// One-sided Wilcoxon p for "method beats baseline"; `None` when every pair ties.
    pub p: Option<f64>,
    pub exact: Option<bool>,
    pub sig: &'static str,
}

pub fn comparison_row(label: &str, pairs: &[(f64, f64)]) -> Result<ComparisonRow, StatsError> {
    let wtl = win_tie_loss(pairs)?;
    let diffs: Vec<f64> = pairs.iter().map(|(m, b)| m - b).collect();
    let wilcoxon = match wilcoxon_signed_rank(&diffs, Alternative::Greater) {
        Ok(r) => Some(r),
        Err(StatsError::AllZeroDifferences) => None,
        Err(e) => return Err(e),
    };
    let method: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let baseline: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let p = wilcoxon.as_ref().map(|r| r.p_value);
    Ok(ComparisonRow {
        label: label.to_owned(),
        n: pairs.len(),
        wins: wtl.wins,
        ties: wtl.ties,
        losses: wtl.losses,
        mean_delta: wtl.mean_delta,
        d: cohens_d(&method, &baseline).ok(),
        p,
        exact: wilcoxon.map(|r| r.exact),
        sig: p.map(significance_stars).unwrap_or(""),
    })
}
