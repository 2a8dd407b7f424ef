//! Token-count tables for one training group and the logit updates they induce.
//!
//! Expectations over a group are trace-weighted: a random trace of the group
//! sits on token `v` at position `t` with probability `n_t(v) / group_size`,
//! and sees `n_t(v)` traces sharing it, so `E[n_t] = sum_v n_t(v)^2 / group_size`.

use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;

use super::{grpo_advantages, GrpoAdvantages, GrpoBatchConfig, TheoryError};

/// Counts per position (0-based, last = answer position) and token.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountTable {
    pub n_plus: Vec<Vec<u32>>,
    pub n_minus: Vec<Vec<u32>>,
    pub v_star: usize,
}

impl CountTable {
    pub fn positions(&self) -> usize {
        self.n_plus.len()
    }

    pub fn vocab(&self) -> usize {
        self.n_plus.first().map_or(0, Vec::len)
    }
}

fn sum_sq(row: &[u32]) -> u64 {
    row.iter().map(|&n| n as u64 * n as u64).sum()
}

/// Sums of squared counts at the tail and over all head positions.
fn square_sums(rows: &[Vec<u32>]) -> (u64, u64) {
    let (head, tail) = rows.split_at(rows.len() - 1);
    (sum_sq(&tail[0]), head.iter().map(|r| sum_sq(r)).sum())
}

/// Tail-to-head ratio of trace-weighted expected counts; the group size
/// cancels, leaving integer sums and one division.
fn tail_head_ratio(rows: &[Vec<u32>]) -> Option<f64> {
    let (tail, head) = square_sums(rows);
    if head == 0 {
        return None;
    }
    let head_positions = (rows.len() - 1) as u64;
    Some((tail * head_positions) as f64 / head as f64)
}

/// Tail distractor counts: `dominant` on the first, the rest spread as
/// evenly as possible over the others.
fn distractor_counts(wrong: u32, distractors: usize, dominant: u32) -> Vec<u32> {
    let mut counts = vec![0u32; distractors];
    counts[0] = dominant;
    let rest = wrong - dominant;
    if distractors > 1 {
        let others = (distractors - 1) as u32;
        for (i, c) in counts[1..].iter_mut().enumerate() {
            *c = rest / others + u32::from((i as u32) < rest % others);
        }
    }
    counts
}

/// Randomized table satisfying answer convergence for correct traces,
/// `k / M` correct traces on each of `M` approach tokens at every head
/// position, and a wrong-trace tail whose dominant distractor is as heavy as
/// the `gamma * M` ratio bound allows.
pub fn build_count_table<R: Rng + ?Sized>(config: &GrpoBatchConfig, rng: &mut R) -> Result<CountTable, TheoryError> {
    config.validate()?;
    let (g, k, m) = (config.group_size, config.correct, config.approaches);
    if k % m != 0 {
        return Err(TheoryError::InfeasibleConfig(format!(
            "k={k} is not divisible by M={m}, so head counts k/M are not integral"
        )));
    }
    let (t_len, vocab) = (config.positions, config.vocab);
    let wrong = (g - k) as u32;
    let per_approach = (k / m) as u32;
    let v_star = rng.gen_range(0..vocab);
    // Tokens other than the answer, addressed by offset from v_star.
    let other = |i: usize| (v_star + 1 + i) % vocab;

    let mut n_plus = vec![vec![0u32; vocab]; t_len];
    let mut n_minus = vec![vec![0u32; vocab]; t_len];
    for t in 0..t_len - 1 {
        let approaches: Vec<usize> = sample(rng, vocab - 1, m).into_iter().map(other).collect();
        for &v in &approaches {
            n_plus[t][v] = per_approach;
        }
        for _ in 0..wrong {
            n_minus[t][approaches[rng.gen_range(0..m)]] += 1;
        }
    }
    n_plus[t_len - 1][v_star] = k as u32;

    let distractors: Vec<usize> = sample(rng, vocab - 1, config.distractors)
        .into_iter()
        .map(other)
        .collect();
    let head_total: u64 = n_minus[..t_len - 1].iter().map(|r| sum_sq(r)).sum();
    let head_mean = head_total as f64 / (t_len - 1) as f64;
    let limit = config.gamma * m as f64 * head_mean;
    let floor = wrong.div_ceil(config.distractors as u32);
    let dominant = (floor..=wrong)
        .rev()
        .find(|&d| (sum_sq(&distractor_counts(wrong, config.distractors, d)) as f64) <= limit)
        .ok_or_else(|| {
            TheoryError::InfeasibleConfig(format!(
                "{wrong} wrong traces over {} distractors cannot keep the tail/head ratio under gamma*M = {}",
                config.distractors,
                config.gamma * m as f64
            ))
        })?;
    for (&v, c) in distractors
        .iter()
        .zip(distractor_counts(wrong, config.distractors, dominant))
    {
        n_minus[t_len - 1][v] = c;
    }
    Ok(CountTable {
        n_plus,
        n_minus,
        v_star,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvariantReport {
    pub answer_convergence: bool,
    pub reasoning_diversity: bool,
    pub concentration_gap: bool,
    pub column_sums: bool,
    /// Realized wrong-trace tail/head ratio, if the head carries mass.
    pub wrong_ratio: Option<f64>,
}

impl InvariantReport {
    pub fn all(&self) -> bool {
        self.answer_convergence && self.reasoning_diversity && self.concentration_gap && self.column_sums
    }
}

pub fn check_invariants(table: &CountTable, config: &GrpoBatchConfig) -> InvariantReport {
    let (g, k, m) = (config.group_size as u64, config.correct as u64, config.approaches as u64);
    let last = table.positions() - 1;
    let answer_convergence = table.n_plus[last][table.v_star] as u64 == k;
    let reasoning_diversity = table.n_plus[..last]
        .iter()
        .flatten()
        .all(|&n| n as u64 * m <= k);
    let column_sums = table.n_plus.iter().all(|r| r.iter().map(|&n| n as u64).sum::<u64>() == k)
        && table.n_minus.iter().all(|r| r.iter().map(|&n| n as u64).sum::<u64>() == g - k);
    let wrong_ratio = tail_head_ratio(&table.n_minus);
    let concentration_gap = wrong_ratio.is_some_and(|r| r <= config.gamma * m as f64);
    InvariantReport {
        answer_convergence,
        reasoning_diversity,
        concentration_gap,
        column_sums,
        wrong_ratio,
    }
}

/// Per-group logit updates `eta * c * A * n` and their sum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogitUpdates {
    pub correct: Vec<Vec<f64>>,
    pub incorrect: Vec<Vec<f64>>,
    pub total: Vec<Vec<f64>>,
    /// Mean over head positions of the correct-trace update on the tokens correct traces use.
    pub head: f64,
    /// Update of the answer token at the last position.
    pub tail: f64,
}

pub fn logit_updates(table: &CountTable, adv: &GrpoAdvantages, eta_eff: f64, c: f64) -> LogitUpdates {
    let scale = |a: f64, rows: &[Vec<u32>]| -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| r.iter().map(|&n| eta_eff * c * a * n as f64).collect())
            .collect()
    };
    let correct = scale(adv.a_correct, &table.n_plus);
    let incorrect = scale(adv.a_incorrect, &table.n_minus);
    let total: Vec<Vec<f64>> = correct
        .iter()
        .zip(&incorrect)
        .map(|(p, q)| p.iter().zip(q).map(|(a, b)| a + b).collect())
        .collect();
    let last = table.positions() - 1;
    let head_cells: Vec<f64> = (0..last)
        .flat_map(|t| {
            table.n_plus[t]
                .iter()
                .enumerate()
                .filter(|(_, &n)| n > 0)
                .map(move |(v, _)| (t, v))
        })
        .map(|(t, v)| total[t][v])
        .collect();
    let head = if head_cells.is_empty() {
        0.0
    } else {
        head_cells.iter().sum::<f64>() / head_cells.len() as f64
    };
    LogitUpdates {
        tail: total[last][table.v_star],
        correct,
        incorrect,
        total,
        head,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReinforcementRatios {
    pub correct: f64,
    pub incorrect: f64,
}

/// Tail-to-head ratios of trace-weighted expected updates within each group.
/// Each group's advantage and `eta * c` scale cancel, so the ratios are
/// computed from count sums alone.
pub fn reinforcement_ratios(table: &CountTable) -> Result<ReinforcementRatios, TheoryError> {
    Ok(ReinforcementRatios {
        correct: tail_head_ratio(&table.n_plus).ok_or(TheoryError::ZeroHeadMass)?,
        incorrect: tail_head_ratio(&table.n_minus).ok_or(TheoryError::ZeroHeadMass)?,
    })
}

/// Trace-weighted expected update for one group from its update and count tables.
pub fn expected_group_update(updates: &[f64], counts: &[u32]) -> f64 {
    let n: u64 = counts.iter().map(|&c| c as u64).sum();
    if n == 0 {
        return 0.0;
    }
    updates.iter().zip(counts).map(|(u, &c)| u * c as f64).sum::<f64>() / n as f64
}

/// Convenience wrapper computing advantages from the config.
pub fn config_updates(table: &CountTable, config: &GrpoBatchConfig) -> Result<LogitUpdates, TheoryError> {
    let adv = grpo_advantages(config.group_size, config.correct)?;
    Ok(logit_updates(table, &adv, config.eta_eff, config.c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::StreamSeed;

    fn cfg(g: usize, k: usize, m: usize, t: usize) -> GrpoBatchConfig {
        GrpoBatchConfig {
            group_size: g,
            correct: k,
            approaches: m,
            positions: t,
            ..Default::default()
        }
    }

    #[test]
    fn head_and_tail_structure() {
        let config = cfg(8, 4, 2, 5);
        let table = build_count_table(&config, &mut StreamSeed::new(1).rng()).unwrap();
        for t in 0..4 {
            let used: Vec<u32> = table.n_plus[t].iter().copied().filter(|&n| n > 0).collect();
            assert_eq!(used, vec![2, 2]);
            assert_eq!(table.n_plus[t][table.v_star], 0);
        }
        assert_eq!(table.n_plus[4][table.v_star], 4);
        assert_eq!(table.n_minus[4][table.v_star], 0);
    }

    #[test]
    fn indivisible_k_is_infeasible() {
        let err = build_count_table(&cfg(8, 3, 2, 5), &mut StreamSeed::new(1).rng()).unwrap_err();
        assert!(matches!(err, TheoryError::InfeasibleConfig(_)));
    }

    #[test]
    fn too_few_distractors_is_infeasible() {
        // One distractor puts every wrong trace on it: ratio (G-k)^2 / head >= M > gamma*M.
        let config = GrpoBatchConfig { distractors: 1, ..cfg(8, 4, 2, 5) };
        assert!(matches!(
            build_count_table(&config, &mut StreamSeed::new(3).rng()),
            Err(TheoryError::InfeasibleConfig(_))
        ));
    }

    #[test]
    fn invariants_hold_over_seeds() {
        let config = cfg(12, 6, 3, 8);
        for s in 0..100 {
            let table = build_count_table(&config, &mut StreamSeed::new(s).rng()).unwrap();
            let report = check_invariants(&table, &config);
            assert!(report.all(), "seed {s}: {report:?}");
        }
    }

    #[test]
    fn update_examples() {
        let adv = grpo_advantages(8, 4).unwrap();
        let table = build_count_table(&cfg(8, 4, 2, 5), &mut StreamSeed::new(9).rng()).unwrap();
        let up = logit_updates(&table, &adv, 1.0, 1.0);
        // Unused cells stay at zero.
        let unused = (0..table.vocab())
            .find(|&v| table.n_plus[0][v] == 0 && table.n_minus[0][v] == 0)
            .unwrap();
        assert_eq!(up.total[0][unused], 0.0);
        // Answer token: A_correct * k = sqrt(k (G - k)).
        assert!((up.tail - 16f64.sqrt()).abs() < 1e-12);

        let adv = grpo_advantages(8, 2).unwrap();
        let mut t = CountTable { n_plus: vec![vec![0; 3]; 2], n_minus: vec![vec![0; 3]; 2], v_star: 0 };
        t.n_minus[0][1] = 2;
        let up = logit_updates(&t, &adv, 1.0, 1.0);
        assert!((up.total[0][1] + 2.0 / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ratio_examples() {
        for s in 0..20 {
            let table = build_count_table(&cfg(12, 6, 3, 6), &mut StreamSeed::new(s).rng()).unwrap();
            assert_eq!(reinforcement_ratios(&table).unwrap().correct, 3.0);
        }

        // Hand-built wrong counts: head sum of squares 8 per position, tail 8.
        let mut t = CountTable { n_plus: vec![vec![0; 6]; 3], n_minus: vec![vec![0; 6]; 3], v_star: 0 };
        for row in 0..2 {
            t.n_plus[row][1] = 2;
            t.n_plus[row][2] = 2;
            t.n_minus[row][1] = 2;
            t.n_minus[row][2] = 2;
        }
        t.n_plus[2][0] = 4;
        t.n_minus[2][3] = 2;
        t.n_minus[2][4] = 2;
        let ratio = reinforcement_ratios(&t).unwrap().incorrect;
        assert_eq!(ratio, 1.0);

        let zero = CountTable { n_plus: vec![vec![0; 3]; 2], n_minus: vec![vec![0; 3]; 2], v_star: 0 };
        assert_eq!(reinforcement_ratios(&zero), Err(TheoryError::ZeroHeadMass));
    }

    #[test]
    fn ratio_one_and_a_half() {
        // Wrong traces: head positions hold counts (2, 2) → 8; tail holds (2, 2, 2) → 12.
        let mut t = CountTable { n_plus: vec![vec![0; 8]; 3], n_minus: vec![vec![0; 8]; 3], v_star: 0 };
        t.n_plus[0][1] = 1;
        t.n_plus[1][1] = 1;
        for row in 0..2 {
            t.n_minus[row][1] = 2;
            t.n_minus[row][2] = 2;
        }
        for v in 3..6 {
            t.n_minus[2][v] = 2;
        }
        let r = reinforcement_ratios(&t).unwrap();
        assert_eq!(r.incorrect, 1.5);
        assert!(r.incorrect <= 0.8 * 2.0);
    }

    #[test]
    fn expected_update_weighting() {
        assert_eq!(expected_group_update(&[2.0, 4.0, 9.0], &[1, 3, 0]), 3.5);
        assert_eq!(expected_group_update(&[1.0], &[0]), 0.0);
    }
}
