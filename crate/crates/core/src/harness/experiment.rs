//! Grid runner: methods x datasets x budgets x runs, plus the sweeps and
//! side studies, collected into one deterministic report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{length_split_indices, pass_at_1, subsample_indices, HarnessError};
use crate::calibration::{estimate_from_features, LabeledGroup, Pooling};
use crate::confidence::{percent_bins, FeatureParams, TraceFeatures};
use crate::stats::{
    comparison_row, direction_analysis, separation_row, ComparisonRow, DirectionSummary, SeparationRow, StatsError,
};
use crate::trace_io::QuestionBundle;
use crate::voting::{trace_score, vote_candidates, Candidate, Selection, VoteConfig, VoteMethod};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub methods: Vec<VoteConfig>,
    pub budgets: Vec<usize>,
    pub runs_per_budget: usize,
    pub master_seed: u64,
    /// Absolute `beta` values for the CDG sweep.
    pub beta_sweep: Vec<f64>,
    /// Sweep values given as multiples of each dataset's own `r_b`.
    pub beta_sweep_rb_multiples: Vec<f64>,
    pub percent_sweep: Vec<f64>,
    pub length_split: bool,
    pub mask_exclusion: bool,
    pub calibrate: bool,
    pub pooling: Pooling,
    pub histogram_bins: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            methods: [
                VoteMethod::Majority,
                VoteMethod::DeepconfMean,
                VoteMethod::DeepconfTail,
                VoteMethod::Cdg,
            ]
            .into_iter()
            .map(VoteConfig::with_method)
            .collect(),
            budgets: vec![8, 16],
            runs_per_budget: 5,
            master_seed: 0,
            beta_sweep: Vec::new(),
            beta_sweep_rb_multiples: Vec::new(),
            percent_sweep: Vec::new(),
            length_split: false,
            mask_exclusion: false,
            calibrate: true,
            pooling: Pooling::Traces,
            histogram_bins: 20,
        }
    }
}

/// Smallest bin count (a multiple of 10, at most 100) that turns `percent`
/// into a whole number of bins.
pub fn bins_for_percent(percent: f64) -> Option<usize> {
    (1..=10).map(|m| 10 * m).find(|&n| percent_bins(percent, n).is_ok())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidConfig(m));
        if self.methods.is_empty() {
            return bad("no methods".into());
        }
        for m in &self.methods {
            m.validate()?;
            if m.method.needs_confidence() {
                percent_bins(m.percent, m.bins).map_err(|e| HarnessError::InvalidConfig(format!("{}: {e}", m.method)))?;
            }
        }
        if self.budgets.is_empty() || self.budgets.contains(&0) {
            return bad("budgets must be a non-empty list of positive sizes".into());
        }
        if self.runs_per_budget == 0 {
            return bad("runs_per_budget must be at least 1".into());
        }
        for &b in self.beta_sweep.iter().chain(&self.beta_sweep_rb_multiples) {
            if !(b.is_finite() && b >= 0.0) {
                return bad(format!("sweep value {b} must be finite and non-negative"));
            }
        }
        for &p in &self.percent_sweep {
            if bins_for_percent(p).is_none() {
                return bad(format!("percent {p} does not map to whole bins"));
            }
        }
        if self.histogram_bins == 0 {
            return bad("histogram_bins must be positive".into());
        }
        Ok(())
    }

    /// Configuration used for sweeps and trace-level statistics: the first
    /// CDG method, or the CDG defaults.
    pub fn reference_cdg(&self) -> VoteConfig {
        self.methods
            .iter()
            .copied()
            .find(|m| m.method == VoteMethod::Cdg)
            .unwrap_or_else(|| VoteConfig::with_method(VoteMethod::Cdg))
    }

    fn labels(&self) -> Vec<String> {
        self.methods
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let dup = self.methods.iter().filter(|o| o.method == m.method).count() > 1;
                if dup {
                    format!("{}#{i}", m.method)
                } else {
                    m.method.to_string()
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub method: String,
    pub dataset: String,
    pub budget: usize,
    pub run: usize,
    pub accuracy: f64,
    pub questions: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub dataset: String,
    pub budget: usize,
    pub runs: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub min_accuracy: f64,
    pub max_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassAtOneRow {
    pub dataset: String,
    pub pass_at_1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationRow {
    pub dataset: String,
    pub mu_c: f64,
    pub mu_plus: f64,
    pub mu_minus: f64,
    pub delta_mu: f64,
    pub r_b: f64,
    pub beta_low: f64,
    pub beta_high: f64,
    pub n_correct: usize,
    pub n_wrong: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaSweepRow {
    pub dataset: String,
    /// `abs` for absolute values, `r_b*<m>` for multiples of the dataset's `r_b`.
    pub setting: String,
    pub beta: f64,
    pub budget: usize,
    pub run: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PercentSweepRow {
    pub dataset: String,
    pub percent: f64,
    pub bins: usize,
    pub budget: usize,
    pub run: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthSplitRow {
    pub method: String,
    pub dataset: String,
    pub pool: String,
    pub accuracy: f64,
    pub questions: usize,
    pub mean_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaskAgreementRow {
    pub method: String,
    pub dataset: String,
    pub agreement: f64,
    pub accuracy_masked: f64,
    pub accuracy_unmasked: f64,
    pub questions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionRow {
    pub dataset: String,
    pub group: String,
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
    pub frac_positive: f64,
    pub frac_negative: f64,
    pub frac_zero: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramRow {
    pub dataset: String,
    pub feature: String,
    pub group: String,
    pub bin: usize,
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceFeatureRow {
    pub dataset: String,
    pub question_id: String,
    pub trace_id: String,
    pub correct: Option<bool>,
    pub length: usize,
    pub mean_conf: f64,
    pub cdg: f64,
    pub tail_bins_mean: f64,
    pub tail_window_conf: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub stage: String,
    pub dataset: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run: Option<usize>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub datasets: Vec<String>,
    pub accuracy: Vec<AccuracyRow>,
    pub summary: Vec<SummaryRow>,
    pub pass_at_1: Vec<PassAtOneRow>,
    pub calibration: Vec<CalibrationRow>,
    pub beta_sweep: Vec<BetaSweepRow>,
    pub percent_sweep: Vec<PercentSweepRow>,
    pub length_split: Vec<LengthSplitRow>,
    pub mask_agreement: Vec<MaskAgreementRow>,
    pub separation: Vec<SeparationRow>,
    pub comparisons: Vec<ComparisonRow>,
    pub direction: Vec<DirectionRow>,
    pub histograms: Vec<HistogramRow>,
    pub trace_features: Vec<TraceFeatureRow>,
    pub failures: Vec<Failure>,
}

impl ExperimentReport {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }

    /// Mean accuracy over runs for one cell of the grid.
    pub fn mean_accuracy(&self, method: &str, dataset: &str, budget: usize) -> Option<f64> {
        self.summary
            .iter()
            .find(|r| r.method == method && r.dataset == dataset && r.budget == budget)
            .map(|r| r.mean_accuracy)
    }
}

type FeatureKey = (usize, u64, usize, bool);

fn feature_key(p: &FeatureParams) -> FeatureKey {
    (p.bins, p.percent.to_bits(), p.tail_window, p.use_mask)
}

struct Runner<'a> {
    bundles: Vec<&'a QuestionBundle>,
    truths: Vec<String>,
    cache: BTreeMap<FeatureKey, Vec<Vec<Result<TraceFeatures, String>>>>,
    failures: Vec<Failure>,
}

/// Outcome of voting one method on every question of a dataset.
struct Pass {
    selections: Vec<Option<Selection>>,
    correct: usize,
    voted: usize,
}

impl Pass {
    fn accuracy(&self) -> f64 {
        if self.voted == 0 {
            0.0
        } else {
            self.correct as f64 / self.voted as f64
        }
    }
}

#[derive(Clone, Copy)]
enum Subset {
    Full,
    Budget { budget: usize, run: usize, seed: u64 },
    Short,
    Long,
}

struct Ctx<'s> {
    stage: &'s str,
    dataset: &'s str,
    method: Option<&'s str>,
}

impl<'a> Runner<'a> {
    fn features(&mut self, params: &FeatureParams) -> &Vec<Vec<Result<TraceFeatures, String>>> {
        let bundles = &self.bundles;
        self.cache.entry(feature_key(params)).or_insert_with(|| {
            bundles
                .iter()
                .map(|b| {
                    b.traces
                        .iter()
                        .map(|t| {
                            TraceFeatures::compute(t, params).map_err(|e| format!("trace '{}': {e}", t.trace_id))
                        })
                        .collect()
                })
                .collect()
        })
    }

    fn indices(&self, q: usize, subset: Subset) -> Result<Vec<usize>, HarnessError> {
        let b = self.bundles[q];
        match subset {
            Subset::Full => Ok((0..b.len()).collect()),
            Subset::Budget { budget, run, seed } => {
                subsample_indices(b.question_id(), b.len(), budget, seed, run as u64)
            }
            Subset::Short => Ok(length_split_indices(b).0),
            Subset::Long => Ok(length_split_indices(b).1),
        }
    }

    fn vote_one(&mut self, q: usize, subset: Subset, cfg: &VoteConfig) -> Result<Selection, String> {
        let idx = self.indices(q, subset).map_err(|e| e.to_string())?;
        if idx.is_empty() {
            return Err("empty trace pool".into());
        }
        let feats = if cfg.method.needs_confidence() {
            let all = &self.features(&cfg.feature_params())[q];
            let mut picked = Vec::with_capacity(idx.len());
            for &i in &idx {
                picked.push(all[i].as_ref().map_err(Clone::clone)?);
            }
            Some(picked.into_iter().copied().collect::<Vec<_>>())
        } else {
            None
        };
        let b = self.bundles[q];
        let candidates: Vec<Candidate<'_>> = idx
            .iter()
            .enumerate()
            .map(|(j, &i)| Candidate {
                trace_id: &b.traces[i].trace_id,
                answer: &b.traces[i].answer_canonical,
                features: feats.as_ref().map(|f| &f[j]),
            })
            .collect();
        vote_candidates(b.question_id(), &candidates, cfg).map_err(|e| e.to_string())
    }

    fn run_pass(&mut self, questions: &[usize], subset: Subset, cfg: &VoteConfig, ctx: &Ctx<'_>) -> Pass {
        let mut pass = Pass {
            selections: Vec::with_capacity(questions.len()),
            correct: 0,
            voted: 0,
        };
        for &q in questions {
            match self.vote_one(q, subset, cfg) {
                Ok(sel) => {
                    pass.voted += 1;
                    if sel.answer == self.truths[q] {
                        pass.correct += 1;
                    }
                    pass.selections.push(Some(sel));
                }
                Err(error) => {
                    let (budget, run) = match subset {
                        Subset::Budget { budget, run, .. } => (Some(budget), Some(run)),
                        _ => (None, None),
                    };
                    self.failures.push(Failure {
                        stage: ctx.stage.to_owned(),
                        dataset: ctx.dataset.to_owned(),
                        method: ctx.method.map(str::to_owned),
                        question_id: Some(self.bundles[q].question_id().to_owned()),
                        budget,
                        run,
                        error,
                    });
                    pass.selections.push(None);
                }
            }
        }
        pass
    }

    fn fail(&mut self, stage: &str, dataset: &str, error: String) {
        self.failures.push(Failure {
            stage: stage.to_owned(),
            dataset: dataset.to_owned(),
            method: None,
            question_id: None,
            budget: None,
            run: None,
            error,
        });
    }
}

/// Flattens a direction summary into one row per correctness group.
pub fn direction_rows(dataset: &str, d: &DirectionSummary) -> Vec<DirectionRow> {
    [("correct", d.correct), ("wrong", d.wrong)]
        .into_iter()
        .map(|(group, counts)| {
            let n = counts.total() as f64;
            DirectionRow {
                dataset: dataset.to_owned(),
                group: group.into(),
                positive: counts.positive,
                negative: counts.negative,
                zero: counts.zero,
                frac_positive: counts.positive as f64 / n,
                frac_negative: counts.negative as f64 / n,
                frac_zero: counts.zero as f64 / n,
            }
        })
        .collect()
}

/// Compares `reference` against every other method over matching
/// `(dataset, budget, run)` accuracy cells, in order of first appearance.
pub fn method_comparisons(rows: &[AccuracyRow], reference: &str) -> Vec<(String, Result<ComparisonRow, StatsError>)> {
    let cells = |label: &str| -> BTreeMap<(String, usize, usize), f64> {
        rows.iter()
            .filter(|r| r.method == label)
            .map(|r| ((r.dataset.clone(), r.budget, r.run), r.accuracy))
            .collect()
    };
    let ours = cells(reference);
    let mut others: Vec<&str> = Vec::new();
    for r in rows {
        if r.method != reference && !others.contains(&r.method.as_str()) {
            others.push(&r.method);
        }
    }
    others
        .into_iter()
        .map(|label| {
            let theirs = cells(label);
            let pairs: Vec<(f64, f64)> = ours
                .iter()
                .filter_map(|(k, &a)| theirs.get(k).map(|&b| (a, b)))
                .collect();
            let name = format!("{reference} vs {label}");
            let row = comparison_row(&name, &pairs);
            (name, row)
        })
        .collect()
}

fn sample_sd(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = x.iter().sum::<f64>() / x.len() as f64;
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

fn summarize(rows: &[AccuracyRow]) -> Vec<SummaryRow> {
    let mut cells: BTreeMap<(String, String, usize), Vec<f64>> = BTreeMap::new();
    for r in rows {
        cells
            .entry((r.method.clone(), r.dataset.clone(), r.budget))
            .or_default()
            .push(r.accuracy);
    }
    // Keep the grid order of first appearance rather than sorted labels.
    let mut order: Vec<(String, String, usize)> = Vec::new();
    for r in rows {
        let key = (r.method.clone(), r.dataset.clone(), r.budget);
        if !order.contains(&key) {
            order.push(key);
        }
    }
    order
        .into_iter()
        .map(|key| {
            let acc = &cells[&key];
            SummaryRow {
                method: key.0,
                dataset: key.1,
                budget: key.2,
                runs: acc.len(),
                mean_accuracy: acc.iter().sum::<f64>() / acc.len() as f64,
                std_accuracy: sample_sd(acc),
                min_accuracy: acc.iter().copied().fold(f64::INFINITY, f64::min),
                max_accuracy: acc.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

fn histogram(dataset: &str, feature: &str, values: &[(bool, f64)], bins: usize) -> Vec<HistogramRow> {
    if values.is_empty() {
        return Vec::new();
    }
    let lo = values.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    let hi = values.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![[0usize; 2]; bins];
    for &(correct, v) in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b][usize::from(correct)] += 1;
    }
    let mut rows = Vec::with_capacity(2 * bins);
    for (group, g) in [("correct", 1), ("wrong", 0)] {
        for (b, c) in counts.iter().enumerate() {
            rows.push(HistogramRow {
                dataset: dataset.to_owned(),
                feature: feature.to_owned(),
                group: group.to_owned(),
                bin: b,
                low: lo + b as f64 * width,
                high: lo + (b + 1) as f64 * width,
                count: c[g],
            });
        }
    }
    rows
}

/// Runs the configured grid. Configuration errors abort; per-question and
/// per-analysis errors are collected in `failures` and the rest of the grid
/// still runs.
pub fn run_experiment(bundles: &[QuestionBundle], config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    config.validate()?;
    if bundles.is_empty() {
        return Err(HarnessError::InvalidConfig("no question bundles".into()));
    }
    let labels = config.labels();
    let mut by_dataset: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, b) in bundles.iter().enumerate() {
        let name = if b.question.dataset.is_empty() { "default" } else { b.question.dataset.as_str() };
        by_dataset.entry(name.to_owned()).or_default().push(i);
    }
    let mut runner = Runner {
        bundles: bundles.iter().collect(),
        truths: bundles.iter().map(|b| b.question.canonical_ground_truth()).collect(),
        cache: BTreeMap::new(),
        failures: Vec::new(),
    };
    let reference = config.reference_cdg();
    let mut report = ExperimentReport {
        config: config.clone(),
        datasets: by_dataset.keys().cloned().collect(),
        accuracy: Vec::new(),
        summary: Vec::new(),
        pass_at_1: Vec::new(),
        calibration: Vec::new(),
        beta_sweep: Vec::new(),
        percent_sweep: Vec::new(),
        length_split: Vec::new(),
        mask_agreement: Vec::new(),
        separation: Vec::new(),
        comparisons: Vec::new(),
        direction: Vec::new(),
        histograms: Vec::new(),
        trace_features: Vec::new(),
        failures: Vec::new(),
    };

    for (dataset, questions) in &by_dataset {
        let ds = dataset.as_str();
        let subset_bundles: Vec<QuestionBundle> = questions.iter().map(|&q| bundles[q].clone()).collect();
        match pass_at_1(&subset_bundles) {
            Ok(p) => report.pass_at_1.push(PassAtOneRow {
                dataset: dataset.clone(),
                pass_at_1: p,
            }),
            Err(e) => runner.fail("pass_at_1", ds, e.to_string()),
        }

        for (m, cfg) in config.methods.iter().enumerate() {
            for &budget in &config.budgets {
                for run in 0..config.runs_per_budget {
                    let subset = Subset::Budget {
                        budget,
                        run,
                        seed: config.master_seed,
                    };
                    let ctx = Ctx {
                        stage: "accuracy",
                        dataset: ds,
                        method: Some(&labels[m]),
                    };
                    let pass = runner.run_pass(questions, subset, cfg, &ctx);
                    report.accuracy.push(AccuracyRow {
                        method: labels[m].clone(),
                        dataset: dataset.clone(),
                        budget,
                        run,
                        accuracy: pass.accuracy(),
                        questions: pass.voted,
                        failed: questions.len() - pass.voted,
                    });
                }
            }
        }

        // Trace-level features under the reference configuration.
        let params = reference.feature_params();
        let feats = runner.features(&params).clone();
        let mut labeled: Vec<LabeledGroup> = Vec::new();
        let mut trace_errors = Vec::new();
        for &q in questions {
            let b = &bundles[q];
            let mut group = LabeledGroup::new();
            for (t, f) in b.traces.iter().zip(&feats[q]) {
                match f {
                    Ok(f) => {
                        report.trace_features.push(TraceFeatureRow {
                            dataset: dataset.clone(),
                            question_id: b.question_id().to_owned(),
                            trace_id: t.trace_id.clone(),
                            correct: t.correct,
                            length: f.length,
                            mean_conf: f.mean_conf,
                            cdg: f.cdg,
                            tail_bins_mean: f.tail_bins_mean,
                            tail_window_conf: f.tail_window_conf,
                            score: trace_score(f.mean_conf, f.cdg, reference.beta),
                        });
                        if let Some(c) = t.correct {
                            group.push((c, *f));
                        }
                    }
                    Err(e) => trace_errors.push(e.clone()),
                }
            }
            labeled.push(group);
        }
        for e in trace_errors {
            runner.fail("trace_features", ds, e);
        }
        let flat: Vec<(bool, TraceFeatures)> = labeled.iter().flatten().copied().collect();
        let correct_cdg: Vec<f64> = flat.iter().filter(|x| x.0).map(|x| x.1.cdg).collect();
        let wrong_cdg: Vec<f64> = flat.iter().filter(|x| !x.0).map(|x| x.1.cdg).collect();
        match separation_row(ds, &correct_cdg, &wrong_cdg) {
            Ok(row) => report.separation.push(row),
            Err(e) => runner.fail("separation", ds, e.to_string()),
        }
        let pairs: Vec<(bool, f64)> = flat.iter().map(|(c, f)| (*c, f.cdg)).collect();
        match direction_analysis(&pairs) {
            Ok(d) => report.direction.extend(direction_rows(ds, &d)),
            Err(e) => runner.fail("direction", ds, e.to_string()),
        }
        let select = |f: fn(&TraceFeatures) -> f64| -> Vec<(bool, f64)> { flat.iter().map(|(c, t)| (*c, f(t))).collect() };
        let beta = reference.beta;
        let scores: Vec<(bool, f64)> = flat
            .iter()
            .map(|(c, t)| (*c, trace_score(t.mean_conf, t.cdg, beta)))
            .collect();
        report
            .histograms
            .extend(histogram(ds, "mean_conf", &select(|t| t.mean_conf), config.histogram_bins));
        report
            .histograms
            .extend(histogram(ds, "cdg", &select(|t| t.cdg), config.histogram_bins));
        report
            .histograms
            .extend(histogram(ds, "score", &scores, config.histogram_bins));

        let mut r_b = None;
        if config.calibrate || !config.beta_sweep_rb_multiples.is_empty() {
            match estimate_from_features(&labeled, config.pooling) {
                Ok(est) => {
                    r_b = Some(est.r_b);
                    report.calibration.push(CalibrationRow {
                        dataset: dataset.clone(),
                        mu_c: est.mu_c,
                        mu_plus: est.mu_plus,
                        mu_minus: est.mu_minus,
                        delta_mu: est.delta_mu,
                        r_b: est.r_b,
                        beta_low: est.beta_band[0],
                        beta_high: est.beta_band[1],
                        n_correct: est.n_correct,
                        n_wrong: est.n_wrong,
                    });
                }
                Err(e) => runner.fail("calibration", ds, e.to_string()),
            }
        }

        let mut betas: Vec<(String, f64)> = config.beta_sweep.iter().map(|&b| ("abs".to_owned(), b)).collect();
        if let Some(r_b) = r_b {
            betas.extend(
                config
                    .beta_sweep_rb_multiples
                    .iter()
                    .map(|&m| (format!("r_b*{m}"), m * r_b)),
            );
        }
        for (setting, beta) in betas {
            let cfg = VoteConfig { beta, ..reference };
            for &budget in &config.budgets {
                for run in 0..config.runs_per_budget {
                    let subset = Subset::Budget {
                        budget,
                        run,
                        seed: config.master_seed,
                    };
                    let ctx = Ctx {
                        stage: "beta_sweep",
                        dataset: ds,
                        method: Some("cdg"),
                    };
                    let pass = runner.run_pass(questions, subset, &cfg, &ctx);
                    report.beta_sweep.push(BetaSweepRow {
                        dataset: dataset.clone(),
                        setting: setting.clone(),
                        beta,
                        budget,
                        run,
                        accuracy: pass.accuracy(),
                    });
                }
            }
        }

        for &percent in &config.percent_sweep {
            let bins = bins_for_percent(percent).expect("validated percent");
            let cfg = VoteConfig {
                percent,
                bins,
                ..reference
            };
            for &budget in &config.budgets {
                for run in 0..config.runs_per_budget {
                    let subset = Subset::Budget {
                        budget,
                        run,
                        seed: config.master_seed,
                    };
                    let ctx = Ctx {
                        stage: "percent_sweep",
                        dataset: ds,
                        method: Some("cdg"),
                    };
                    let pass = runner.run_pass(questions, subset, &cfg, &ctx);
                    report.percent_sweep.push(PercentSweepRow {
                        dataset: dataset.clone(),
                        percent,
                        bins,
                        budget,
                        run,
                        accuracy: pass.accuracy(),
                    });
                }
            }
        }

        if config.length_split {
            for (m, cfg) in config.methods.iter().enumerate() {
                for (pool, subset) in [("short", Subset::Short), ("long", Subset::Long)] {
                    let ctx = Ctx {
                        stage: "length_split",
                        dataset: ds,
                        method: Some(&labels[m]),
                    };
                    let pass = runner.run_pass(questions, subset, cfg, &ctx);
                    let lengths: Vec<usize> = questions
                        .iter()
                        .flat_map(|&q| {
                            let idx = runner.indices(q, subset).unwrap_or_default();
                            idx.into_iter().map(move |i| bundles[q].traces[i].token_count())
                        })
                        .collect();
                    report.length_split.push(LengthSplitRow {
                        method: labels[m].clone(),
                        dataset: dataset.clone(),
                        pool: pool.into(),
                        accuracy: pass.accuracy(),
                        questions: pass.voted,
                        mean_length: if lengths.is_empty() {
                            0.0
                        } else {
                            lengths.iter().sum::<usize>() as f64 / lengths.len() as f64
                        },
                    });
                }
            }
        }

        if config.mask_exclusion {
            for (m, cfg) in config.methods.iter().enumerate() {
                if !cfg.method.needs_confidence() {
                    continue;
                }
                let ctx = Ctx {
                    stage: "mask_exclusion",
                    dataset: ds,
                    method: Some(&labels[m]),
                };
                let plain = runner.run_pass(questions, Subset::Full, &VoteConfig { mask_exclude: false, ..*cfg }, &ctx);
                let masked = runner.run_pass(questions, Subset::Full, &VoteConfig { mask_exclude: true, ..*cfg }, &ctx);
                let both: Vec<(&Selection, &Selection)> = plain
                    .selections
                    .iter()
                    .zip(&masked.selections)
                    .filter_map(|(a, b)| Some((a.as_ref()?, b.as_ref()?)))
                    .collect();
                let same = both.iter().filter(|(a, b)| a.answer == b.answer).count();
                report.mask_agreement.push(MaskAgreementRow {
                    method: labels[m].clone(),
                    dataset: dataset.clone(),
                    agreement: if both.is_empty() { 0.0 } else { same as f64 / both.len() as f64 },
                    accuracy_masked: masked.accuracy(),
                    accuracy_unmasked: plain.accuracy(),
                    questions: both.len(),
                });
            }
        }
    }

    if let Some(reference_idx) = config.methods.iter().position(|m| m.method == VoteMethod::Cdg) {
        for (name, row) in method_comparisons(&report.accuracy, &labels[reference_idx]) {
            match row {
                Ok(row) => report.comparisons.push(row),
                Err(e) => runner.fail("comparison", "all", format!("{name}: {e}")),
            }
        }
    }

    report.summary = summarize(&report.accuracy);
    report.failures = runner.failures;
    Ok(report)
}
