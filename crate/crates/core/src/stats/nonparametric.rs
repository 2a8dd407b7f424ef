//! Rank tests. Average ranks are carried doubled so every tie stays an
//! integer and exact-path comparisons never touch floating point.

use super::special::normal_cdf;
use super::{Alternative, StatResult, StatsError, TestKind};

pub const MWU_EXACT_MAX_TOTAL: usize = 12;
pub const WILCOXON_EXACT_MAX_N: usize = 20;

/// Doubled average ranks (1-based) of `values`, in input order, plus the
/// tie-group sizes.
fn doubled_ranks(values: &[f64]) -> (Vec<u64>, Vec<u64>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0u64; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            ranks[idx] = (i + j + 2) as u64;
        }
        ties.push((j - i + 1) as u64);
        i = j + 1;
    }
    (ranks, ties)
}

fn tie_term(ties: &[u64]) -> f64 {
    ties.iter().map(|&t| (t * t * t - t) as f64).sum()
}

fn check_finite(sample: &[f64]) -> Result<(), StatsError> {
    if sample.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFiniteValue)
    }
}

/// Normal-approximation p-value with a 0.5 continuity correction.
fn normal_p(stat: f64, mean: f64, var: f64, alternative: Alternative) -> f64 {
    if var <= 0.0 {
        return 1.0;
    }
    let sd = var.sqrt();
    let p = match alternative {
        Alternative::Less => normal_cdf((stat + 0.5 - mean) / sd),
        Alternative::Greater => normal_cdf(-(stat - 0.5 - mean) / sd),
        Alternative::TwoSided => 2.0 * normal_cdf(-((stat - mean).abs() - 0.5) / sd),
    };
    p.clamp(0.0, 1.0)
}

/// Tail probability of an integer statistic from its exact null counts.
/// `counts[s]` is the number of configurations with doubled statistic `s`;
/// `center2` is twice the doubled null mean.
fn exact_p(counts: &[u128], observed: usize, center2: i128, alternative: Alternative) -> f64 {
    let total: u128 = counts.iter().sum();
    let hit: u128 = counts
        .iter()
        .enumerate()
        .filter(|&(s, &c)| {
            c > 0
                && match alternative {
                    Alternative::Less => s <= observed,
                    Alternative::Greater => s >= observed,
                    Alternative::TwoSided => {
                        (2 * s as i128 - center2).abs() >= (2 * observed as i128 - center2).abs()
                    }
                }
        })
        .map(|(_, &c)| c)
        .sum();
    hit as f64 / total as f64
}

/// Mann-Whitney U test of `a` against `b`. The statistic is `U_a`, the number
/// of pairs with `a > b` plus half the ties; `Less` asks whether `a` tends to
/// be smaller.
pub fn mann_whitney_u(a: &[f64], b: &[f64], alternative: Alternative) -> Result<StatResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    check_finite(a)?;
    check_finite(b)?;
    let (n, m) = (a.len(), b.len());
    let total = n + m;
    let combined: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = doubled_ranks(&combined);
    let r2: u64 = ranks[..n].iter().sum();
    let u2 = (r2 - (n * (n + 1)) as u64) as usize;
    let u = u2 as f64 / 2.0;

    let (p_value, exact) = if total <= MWU_EXACT_MAX_TOTAL {
        // counts[k][s]: subsets of size k whose doubled rank sum is s.
        let max_sum: usize = ranks.iter().map(|&r| r as usize).sum();
        let mut counts = vec![vec![0u128; max_sum + 1]; n + 1];
        counts[0][0] = 1;
        for &r in &ranks {
            let r = r as usize;
            for k in (1..=n).rev() {
                for s in (r..=max_sum).rev() {
                    counts[k][s] += counts[k - 1][s - r];
                }
            }
        }
        let offset = n * (n + 1);
        let by_u: Vec<u128> = counts[n].iter().skip(offset).copied().collect();
        (exact_p(&by_u, u2, 2 * (n * m) as i128, alternative), true)
    } else {
        let nm = (n * m) as f64;
        let nt = total as f64;
        let var = nm / 12.0 * ((nt + 1.0) - tie_term(&ties) / (nt * (nt - 1.0)));
        (normal_p(u, nm / 2.0, var, alternative), false)
    };
    Ok(StatResult {
        test: TestKind::MannWhitneyU,
        statistic: u,
        p_value,
        alternative,
        n,
        m: Some(m),
        effect_size: None,
        exact,
        zeros_dropped: None,
        df: None,
    })
}

/// Wilcoxon signed-rank test on paired differences. Zeros are dropped and
/// counted; the statistic is `W+`, the rank sum of positive differences.
pub fn wilcoxon_signed_rank(differences: &[f64], alternative: Alternative) -> Result<StatResult, StatsError> {
    check_finite(differences)?;
    let nonzero: Vec<f64> = differences.iter().copied().filter(|&d| d != 0.0).collect();
    if nonzero.is_empty() {
        return Err(StatsError::AllZeroDifferences);
    }
    let n = nonzero.len();
    let zeros_dropped = differences.len() - n;
    let magnitudes: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = doubled_ranks(&magnitudes);
    let w2: u64 = ranks
        .iter()
        .zip(&nonzero)
        .filter(|(_, &d)| d > 0.0)
        .map(|(&r, _)| r)
        .sum();
    let w = w2 as f64 / 2.0;

    let (p_value, exact) = if n <= WILCOXON_EXACT_MAX_N {
        let max_sum: usize = ranks.iter().map(|&r| r as usize).sum();
        let mut counts = vec![0u128; max_sum + 1];
        counts[0] = 1;
        for &r in &ranks {
            let r = r as usize;
            for s in (r..=max_sum).rev() {
                counts[s] += counts[s - r];
            }
        }
        (exact_p(&counts, w2 as usize, max_sum as i128, alternative), true)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term(&ties) / 48.0;
        (normal_p(w, mean, var, alternative), false)
    };
    Ok(StatResult {
        test: TestKind::WilcoxonSignedRank,
        statistic: w,
        p_value,
        alternative,
        n,
        m: None,
        effect_size: None,
        exact,
        zeros_dropped: Some(zeros_dropped),
        df: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ALTS: [Alternative; 3] = [Alternative::Less, Alternative::Greater, Alternative::TwoSided];

    /// U by direct pair counting, doubled.
    fn pair_u2(a: &[f64], b: &[f64]) -> i64 {
        let mut u = 0;
        for x in a {
            for y in b {
                u += if x > y { 2 } else if x == y { 1 } else { 0 };
            }
        }
        u
    }

    /// Permutation p-value: every way to choose which pooled values form `a`.
    fn brute_mwu(a: &[f64], b: &[f64], alt: Alternative) -> f64 {
        let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
        let (n, total) = (a.len(), pooled.len());
        let obs = pair_u2(a, b);
        let center = (a.len() * b.len()) as i64;
        let (mut hit, mut all) = (0u64, 0u64);
        for mask in 0u32..(1 << total) {
            if mask.count_ones() as usize != n {
                continue;
            }
            let (x, y): (Vec<f64>, Vec<f64>) = {
                let mut x = Vec::new();
                let mut y = Vec::new();
                for (i, &v) in pooled.iter().enumerate() {
                    if mask >> i & 1 == 1 { x.push(v) } else { y.push(v) }
                }
                (x, y)
            };
            let u = pair_u2(&x, &y);
            all += 1;
            let ok = match alt {
                Alternative::Less => u <= obs,
                Alternative::Greater => u >= obs,
                Alternative::TwoSided => (u - center).abs() >= (obs - center).abs(),
            };
            hit += ok as u64;
        }
        hit as f64 / all as f64
    }

    /// Sign-flip p-value over all 2^n patterns, with float average ranks.
    fn brute_wilcoxon(d: &[f64], alt: Alternative) -> f64 {
        let nz: Vec<f64> = d.iter().copied().filter(|&x| x != 0.0).collect();
        let mags: Vec<f64> = nz.iter().map(|x| x.abs()).collect();
        let rank = |v: f64| {
            let below = mags.iter().filter(|&&m| m < v).count() as f64;
            let equal = mags.iter().filter(|&&m| m == v).count() as f64;
            below + (equal + 1.0) / 2.0
        };
        let ranks: Vec<f64> = mags.iter().map(|&m| rank(m)).collect();
        let n = nz.len();
        let obs: f64 = ranks.iter().zip(&nz).filter(|(_, &x)| x > 0.0).map(|(r, _)| r).sum();
        let center = n as f64 * (n as f64 + 1.0) / 4.0;
        let mut hit = 0u64;
        for mask in 0u32..(1 << n) {
            let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            let ok = match alt {
                Alternative::Less => w <= obs + 1e-9,
                Alternative::Greater => w >= obs - 1e-9,
                Alternative::TwoSided => (w - center).abs() >= (obs - center).abs() - 1e-9,
            };
            hit += ok as u64;
        }
        hit as f64 / (1u64 << n) as f64
    }

    #[test]
    fn mwu_fixtures() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], Alternative::Less).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0 / 20.0);
        assert!(r.exact);
        let r = mann_whitney_u(&[3.0, 1.0, 2.0], &[1.0, 2.0, 3.0], Alternative::TwoSided).unwrap();
        assert_eq!(r.p_value, 1.0);
        let r = mann_whitney_u(&[1.0], &[2.0], Alternative::Less).unwrap();
        assert_eq!(r.p_value, 0.5);
        assert_eq!(mann_whitney_u(&[], &[1.0], Alternative::Less).unwrap_err(), StatsError::EmptySample);
    }

    #[test]
    fn mwu_asymptotic_reference() {
        let a = [1.1, 2.3, 3.3, 4.8, 5.0, 6.1, 7.7, 1.2];
        let b = [2.0, 3.3, 4.0, 9.1, 10.5, 11.0, 3.3, 8.8, 12.0];
        let expected = [0.05573516242013295, 0.9543021422382414, 0.1114703248402659];
        for (alt, want) in ALTS.into_iter().zip(expected) {
            let r = mann_whitney_u(&a, &b, alt).unwrap();
            assert!(!r.exact);
            assert_eq!(r.statistic, 19.0);
            assert!((r.p_value - want).abs() < 1e-12, "{alt:?}: {}", r.p_value);
        }
    }

    #[test]
    fn wilcoxon_fixtures() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0, 5.0], Alternative::Greater).unwrap();
        assert_eq!(r.p_value, 1.0 / 32.0);
        assert_eq!(r.statistic, 15.0);
        assert_eq!(
            wilcoxon_signed_rank(&[0.0, 0.0, 0.0], Alternative::TwoSided).unwrap_err(),
            StatsError::AllZeroDifferences
        );
        let r = wilcoxon_signed_rank(&[1.0, -1.0], Alternative::TwoSided).unwrap();
        assert_eq!(r.p_value, 1.0);
        let r = wilcoxon_signed_rank(&[0.0, 1.0, 2.0], Alternative::Greater).unwrap();
        assert_eq!(r.zeros_dropped, Some(1));
        assert_eq!(r.n, 2);
    }

    #[test]
    fn wilcoxon_asymptotic_reference() {
        let d = [
            0.5, -1.2, 2.2, 3.1, 0.5, 1.7, -0.4, 2.9, 4.4, 1.1, -2.0, 3.3, 0.8, 1.9, 2.2, -0.6, 1.4,
            2.5, 0.9, 3.7, 1.6, 2.8,
        ];
        let expected = [0.9994799753563988, 0.0005831565973812251, 0.0011663131947624503];
        for (alt, want) in ALTS.into_iter().zip(expected) {
            let r = wilcoxon_signed_rank(&d, alt).unwrap();
            assert!(!r.exact);
            assert_eq!(r.statistic, 227.0);
            assert!((r.p_value - want).abs() < 1e-12, "{alt:?}: {}", r.p_value);
        }
    }

    fn small_sample(max: usize) -> impl Strategy<Value = Vec<f64>> {
        // Coarse values so ties are common.
        prop::collection::vec((0i32..6).prop_map(|v| v as f64 * 0.5), 1..=max)
    }

    proptest! {
        #[test]
        fn mwu_exact_matches_permutations(a in small_sample(6), b in small_sample(6)) {
            prop_assume!(a.len() + b.len() <= 10);
            for alt in ALTS {
                let r = mann_whitney_u(&a, &b, alt).unwrap();
                prop_assert!(r.exact);
                prop_assert_eq!(r.statistic * 2.0, pair_u2(&a, &b) as f64);
                prop_assert!((r.p_value - brute_mwu(&a, &b, alt)).abs() < 1e-12);
            }
        }

        #[test]
        fn mwu_one_sided_complement(a in prop::collection::btree_set(0u32..1000, 1..6), b in prop::collection::btree_set(1000u32..2000, 1..6), swap in any::<u64>()) {
            // Disjoint sets, so no ties; shuffle membership via swap bits.
            let mut pooled: Vec<u32> = a.iter().chain(&b).copied().collect();
            let len = pooled.len();
            pooled.rotate_left((swap as usize) % len);
            let (x, y) = pooled.split_at(a.len());
            let x: Vec<f64> = x.iter().map(|&v| v as f64).collect();
            let y: Vec<f64> = y.iter().map(|&v| v as f64).collect();
            let less = mann_whitney_u(&x, &y, Alternative::Less).unwrap().p_value;
            let greater = mann_whitney_u(&x, &y, Alternative::Greater).unwrap().p_value;
            prop_assert!(less + greater >= 1.0);
        }

        #[test]
        fn wilcoxon_exact_matches_sign_flips(d in prop::collection::vec((-4i32..=4).prop_map(|v| v as f64), 1..=12)) {
            prop_assume!(d.iter().any(|&x| x != 0.0));
            for alt in ALTS {
                let r = wilcoxon_signed_rank(&d, alt).unwrap();
                prop_assert!(r.exact);
                prop_assert!((r.p_value - brute_wilcoxon(&d, alt)).abs() < 1e-12);
            }
        }

        #[test]
        fn p_values_in_unit_interval(a in prop::collection::vec(-5.0f64..5.0, 1..40), b in prop::collection::vec(-5.0f64..5.0, 1..40)) {
            for alt in ALTS {
                let p = mann_whitney_u(&a, &b, alt).unwrap().p_value;
                prop_assert!((0.0..=1.0).contains(&p));
                if let Ok(r) = wilcoxon_signed_rank(&a, alt) {
                    prop_assert!((0.0..=1.0).contains(&r.p_value));
                }
            }
        }
    }
}
