//! Synthetic benchmarks with known per-trace confidence targets.
//!
//! Each trace gets a bin-level profile: the head bins sit at `C - d/2`, the
//! tail bins at `C + d/2` and the bins in between interpolate linearly, so the
//! gain over the configured bins and percent is exactly the drawn `d`. Tokens
//! inside a bin carry centered uniform noise that leaves the bin mean intact.

use rand::distributions::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::confidence::{bin_bounds, percent_bins, MIN_TRACE_TOKENS};
use crate::seed::StreamSeed;
use crate::trace_io::{Payload, QuestionBundle, QuestionManifest, TokenLogprobs, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SyntheticPayload {
    Confidences,
    /// Top-K logprob vectors whose negated mean equals the token confidence.
    TopK { k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub questions: usize,
    pub traces_per_question: usize,
    pub correct_rate: f64,
    pub distractors: usize,
    /// Distractor `j` is drawn with weight `(j + 1)^-skew`.
    pub distractor_skew: f64,
    pub mu_plus: f64,
    pub mu_minus: f64,
    pub cdg_spread: f64,
    pub mean_conf: f64,
    pub mean_conf_spread: f64,
    /// Added to correct and subtracted from wrong traces' mean-confidence target, halved.
    pub mean_conf_gap: f64,
    pub length_min: usize,
    pub length_max: usize,
    pub bins: usize,
    pub percent: f64,
    pub token_noise: f64,
    /// Masked-out answer tokens appended after the reasoning tokens.
    pub boxed_tokens: usize,
    /// Confidence of the appended answer tokens above the trace's tail level.
    pub boxed_boost: f64,
    pub payload: SyntheticPayload,
    pub dataset: String,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            questions: 50,
            traces_per_question: 32,
            correct_rate: 0.5,
            distractors: 4,
            distractor_skew: 1.0,
            mu_plus: 1.0,
            mu_minus: -1.0,
            cdg_spread: 0.5,
            mean_conf: 8.0,
            mean_conf_spread: 1.0,
            mean_conf_gap: 0.0,
            length_min: 200,
            length_max: 2000,
            bins: 10,
            percent: 10.0,
            token_noise: 0.5,
            boxed_tokens: 0,
            boxed_boost: 2.0,
            payload: SyntheticPayload::Confidences,
            dataset: "synthetic".into(),
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidConfig(m));
        if self.questions == 0 || self.traces_per_question == 0 {
            return bad("need at least one question and one trace per question".into());
        }
        if !(0.0..=1.0).contains(&self.correct_rate) {
            return bad(format!("correct_rate {} outside [0, 1]", self.correct_rate));
        }
        if self.correct_rate < 1.0 && self.distractors == 0 {
            return bad("wrong traces need at least one distractor".into());
        }
        let finite = [
            self.distractor_skew,
            self.mu_plus,
            self.mu_minus,
            self.mean_conf,
            self.mean_conf_gap,
            self.boxed_boost,
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return bad("numeric parameters must be finite".into());
        }
        for (name, v) in [
            ("cdg_spread", self.cdg_spread),
            ("mean_conf_spread", self.mean_conf_spread),
            ("token_noise", self.token_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and non-negative"));
            }
        }
        if self.mean_conf <= 0.0 {
            return bad("mean_conf must be positive".into());
        }
        if self.length_min < MIN_TRACE_TOKENS.max(self.bins) || self.length_max < self.length_min {
            return bad(format!(
                "length range {}..={} must start at max({MIN_TRACE_TOKENS}, bins) or later",
                self.length_min, self.length_max
            ));
        }
        let p = percent_bins(self.percent, self.bins).map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        if 2 * p > self.bins {
            return bad("head and tail bins overlap".into());
        }
        if let SyntheticPayload::TopK { k } = self.payload {
            if k == 0 {
                return bad("top-k width must be positive".into());
            }
        }
        Ok(())
    }

    pub fn ground_truth(&self, question: usize) -> String {
        (17 * question + 3).to_string()
    }
}

/// Generator-side targets for one trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceTarget {
    pub question_id: String,
    pub trace_id: String,
    pub correct: bool,
    /// Mean over the reasoning tokens, excluding appended answer tokens.
    pub mean_conf: f64,
    pub cdg: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticBenchmark {
    pub bundles: Vec<QuestionBundle>,
    pub manifest: Vec<QuestionManifest>,
    pub targets: Vec<TraceTarget>,
}

impl SyntheticBenchmark {
    pub fn records(&self) -> Vec<TraceRecord> {
        self.bundles.iter().flat_map(|b| b.traces.iter().cloned()).collect()
    }
}

/// Bin means realizing mean `c` and gain `d` with `p` head and tail bins.
fn bin_profile(c: f64, d: f64, bins: usize, p: usize) -> Vec<f64> {
    let (lo, hi) = (c - d / 2.0, c + d / 2.0);
    let span = (bins - 2 * p + 1) as f64;
    (0..bins)
        .map(|i| {
            if i < p {
                lo
            } else if i >= bins - p {
                hi
            } else {
                lo + d * (i + 1 - p) as f64 / span
            }
        })
        .collect()
}

fn topk_logprobs(c: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![-c];
    }
    let half = (k - 1) as f64 / 2.0;
    (0..k).map(|j| -c * (1.0 + 0.5 * (half - j as f64) / half)).collect()
}

fn draw(rng: &mut impl Rng, mean: f64, spread: f64) -> f64 {
    if spread == 0.0 {
        return mean;
    }
    Normal::new(mean, spread).expect("validated spread").sample(rng)
}

pub fn generate_synthetic_benchmark(config: &SyntheticConfig) -> Result<SyntheticBenchmark, HarnessError> {
    config.validate()?;
    let p = percent_bins(config.percent, config.bins).map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
    let weights: Vec<f64> = (0..config.distractors.max(1))
        .map(|j| ((j + 1) as f64).powf(-config.distractor_skew))
        .collect();
    let picker = WeightedIndex::new(&weights).map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
    let width = match config.payload {
        SyntheticPayload::TopK { k } => Some(k),
        SyntheticPayload::Confidences => None,
    };

    let mut bundles = Vec::with_capacity(config.questions);
    let mut manifest = Vec::with_capacity(config.questions);
    let mut targets = Vec::new();
    for q in 0..config.questions {
        let question_id = format!("{}-{q:04}", config.dataset);
        let truth = config.ground_truth(q);
        let question = QuestionManifest {
            question_id: question_id.clone(),
            ground_truth: truth.clone(),
            dataset: config.dataset.clone(),
            metadata: Default::default(),
        };
        let mut traces = Vec::with_capacity(config.traces_per_question);
        for j in 0..config.traces_per_question {
            let trace_id = format!("t{j:04}");
            let mut rng = StreamSeed::new(config.seed)
                .text("synthetic")
                .text(&question_id)
                .index(j as u64)
                .rng();
            let correct = rng.gen::<f64>() < config.correct_rate;
            let answer = if correct {
                truth.clone()
            } else {
                (17 * q + 3 + 1 + picker.sample(&mut rng)).to_string()
            };
            let (mu, gap) = if correct {
                (config.mu_plus, config.mean_conf_gap / 2.0)
            } else {
                (config.mu_minus, -config.mean_conf_gap / 2.0)
            };
            let d = draw(&mut rng, mu, config.cdg_spread);
            let mut c = draw(&mut rng, config.mean_conf + gap, config.mean_conf_spread);
            // Keep every token confidence non-negative.
            let floor = d.abs() / 2.0 + 2.0 * config.token_noise;
            if c < floor {
                c = floor;
            }
            let len = rng.gen_range(config.length_min..=config.length_max);
            let profile = bin_profile(c, d, config.bins, p);
            let mut values = Vec::with_capacity(len + config.boxed_tokens);
            for (range, &level) in bin_bounds(len, config.bins)
                .expect("validated length")
                .into_iter()
                .zip(&profile)
            {
                let noise: Vec<f64> = (0..range.len())
                    .map(|_| {
                        if config.token_noise > 0.0 {
                            rng.gen_range(-config.token_noise..=config.token_noise)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let centre = noise.iter().sum::<f64>() / noise.len() as f64;
                values.extend(noise.iter().map(|u| (level + u - centre).max(0.0)));
            }
            let mean_conf = values.iter().sum::<f64>() / len as f64;
            let boxed_level = c + d / 2.0 + config.boxed_boost;
            values.extend(std::iter::repeat_n(boxed_level.max(0.0), config.boxed_tokens));
            let mask = (config.boxed_tokens > 0).then(|| {
                let mut m = vec![true; len];
                m.extend(std::iter::repeat_n(false, config.boxed_tokens));
                m
            });
            let payload = match config.payload {
                SyntheticPayload::Confidences => Payload::Confidences(values),
                SyntheticPayload::TopK { k } => Payload::TopK(
                    values
                        .iter()
                        .map(|&v| TokenLogprobs {
                            logprobs: topk_logprobs(v, k),
                            text: None,
                        })
                        .collect(),
                ),
            };
            let record = TraceRecord::new(&question_id, &trace_id, answer, Some(correct), payload, mask, width)
                .map_err(|e| HarnessError::InvalidConfig(format!("generated trace rejected: {e}")))?;
            targets.push(TraceTarget {
                question_id: question_id.clone(),
                trace_id,
                correct,
                mean_conf,
                cdg: d,
            });
            traces.push(record);
        }
        manifest.push(question.clone());
        bundles.push(QuestionBundle { question, traces });
    }
    Ok(SyntheticBenchmark {
        bundles,
        manifest,
        targets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confidence::{FeatureParams, TraceFeatures};
    use crate::stats::direction_analysis;
    use crate::voting::{vote, VoteConfig, VoteMethod};

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            questions: 6,
            traces_per_question: 8,
            length_min: 40,
            length_max: 300,
            ..Default::default()
        }
    }

    #[test]
    fn profile_realizes_targets() {
        for (bins, p) in [(10, 1), (20, 3), (10, 5)] {
            let prof = bin_profile(5.0, 1.5, bins, p);
            let head: f64 = prof[..p].iter().sum::<f64>() / p as f64;
            let tail: f64 = prof[bins - p..].iter().sum::<f64>() / p as f64;
            assert!((tail - head - 1.5).abs() < 1e-12);
            assert!((prof.iter().sum::<f64>() / bins as f64 - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn recomputed_features_match_targets() {
        for payload in [SyntheticPayload::Confidences, SyntheticPayload::TopK { k: 5 }] {
            let cfg = SyntheticConfig { payload, ..small() };
            let bench = generate_synthetic_benchmark(&cfg).unwrap();
            let params = FeatureParams::default();
            for (t, target) in bench.records().iter().zip(&bench.targets) {
                let f = TraceFeatures::compute(t, &params).unwrap();
                assert!((f.cdg - target.cdg).abs() < 1e-9, "{} vs {}", f.cdg, target.cdg);
                assert!((f.mean_conf - target.mean_conf).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn masked_answer_tokens() {
        let cfg = SyntheticConfig { boxed_tokens: 4, ..small() };
        let bench = generate_synthetic_benchmark(&cfg).unwrap();
        let masked = FeatureParams { use_mask: true, ..Default::default() };
        for (t, target) in bench.records().iter().zip(&bench.targets) {
            assert_eq!(t.mask.as_ref().unwrap().iter().filter(|m| !**m).count(), 4);
            let f = TraceFeatures::compute(t, &masked).unwrap();
            assert!((f.cdg - target.cdg).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_spread_separates_directions() {
        let cfg = SyntheticConfig { cdg_spread: 0.0, ..small() };
        let bench = generate_synthetic_benchmark(&cfg).unwrap();
        let params = FeatureParams::default();
        let pairs: Vec<(bool, f64)> = bench
            .records()
            .iter()
            .map(|t| (t.correct.unwrap(), TraceFeatures::compute(t, &params).unwrap().cdg))
            .collect();
        let d = direction_analysis(&pairs).unwrap();
        assert_eq!(d.frac_positive_correct, 1.0);
        assert_eq!(d.frac_negative_wrong, 1.0);
    }

    #[test]
    fn all_correct_majority_is_perfect() {
        let cfg = SyntheticConfig { correct_rate: 1.0, ..small() };
        let bench = generate_synthetic_benchmark(&cfg).unwrap();
        for b in &bench.bundles {
            let s = vote(b, &VoteConfig::with_method(VoteMethod::Majority)).unwrap();
            assert_eq!(s.answer, b.question.canonical_ground_truth());
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = generate_synthetic_benchmark(&small()).unwrap();
        let b = generate_synthetic_benchmark(&small()).unwrap();
        assert_eq!(a.bundles, b.bundles);
        let c = generate_synthetic_benchmark(&SyntheticConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.bundles, c.bundles);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(generate_synthetic_benchmark(&SyntheticConfig { length_min: 5, ..small() }).is_err());
        assert!(generate_synthetic_benchmark(&SyntheticConfig { percent: 15.0, ..small() }).is_err());
        assert!(generate_synthetic_benchmark(&SyntheticConfig { correct_rate: 1.5, ..small() }).is_err());
    }
}
