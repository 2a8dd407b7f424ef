//! Group-normalized advantages, count tables, reinforcement ratios, the
//! single-token confidence bound and the simulated gain separation.

use cdg::seed::StreamSeed;
use cdg::theory::{
    build_count_table, check_confidence_logit_bound, check_invariants, config_updates, grpo_advantages,
    reinforcement_ratios, separation_lower_bound, simulate_confidence_separation, GrpoBatchConfig,
};

fn main() -> anyhow::Result<()> {
    for (g, k) in [(2, 1), (8, 2), (8, 4), (16, 12)] {
        let a = grpo_advantages(g, k)?;
        println!("G={g:<2} k={k:<2} A+={:+.4} A-={:+.4} sigma={:.4}", a.a_correct, a.a_incorrect, a.sigma_r);
    }

    let cfg = GrpoBatchConfig {
        group_size: 12,
        correct: 6,
        approaches: 3,
        gamma: 0.5,
        positions: 20,
        distractors: 6,
        ..Default::default()
    };
    let table = build_count_table(&cfg, &mut StreamSeed::new(1).rng())?;
    let inv = check_invariants(&table, &cfg);
    let ratios = reinforcement_ratios(&table)?;
    let up = config_updates(&table, &cfg)?;
    println!("\ninvariants hold: {} (wrong ratio {:?} vs gamma*M {})", inv.all(), inv.wrong_ratio, cfg.gamma * 3.0);
    println!("ratio correct {} ratio incorrect {:.4}", ratios.correct, ratios.incorrect);
    println!("head update {:.4} tail update {:.4}", up.head, up.tail);

    let mut logits = vec![0.0; 100];
    logits[0] = 4.0;
    for delta in [0.1, 1.0, 3.0] {
        let b = check_confidence_logit_bound(&logits, 0, delta, 20)?;
        println!("delta {delta}: dC {:.5} bound {:.5} holds {}", b.delta_c, b.bound, b.holds);
    }

    for gamma in [0.05, 0.11, 0.2, 0.5] {
        let c = GrpoBatchConfig { gamma, ..cfg.clone() };
        let bound = separation_lower_bound(&c);
        match simulate_confidence_separation(&c, 20, 3) {
            Ok(r) => println!(
                "gamma {gamma:<4} bound {:+.4} (positive {}) simulated mean {:+.4} all positive {}",
                bound.value, bound.positive, r.summary.mean_separation, r.summary.all_positive
            ),
            Err(e) => println!("gamma {gamma:<4} bound {:+.4}: {e}", bound.value),
        }
    }
    Ok(())
}
