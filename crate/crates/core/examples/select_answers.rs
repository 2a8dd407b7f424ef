//! Votes on a synthetic benchmark with every method and reports accuracy.

use cdg::harness::{evaluate, generate_synthetic_benchmark, pass_at_1, SyntheticConfig};
use cdg::voting::{vote, VoteConfig, VoteMethod};

fn main() -> anyhow::Result<()> {
    let bench = generate_synthetic_benchmark(&SyntheticConfig {
        questions: 100,
        traces_per_question: 16,
        correct_rate: 0.4,
        distractors: 3,
        length_min: 100,
        length_max: 800,
        seed: 7,
        ..Default::default()
    })?;
    println!("pass@1: {:.3}", pass_at_1(&bench.bundles)?);

    for method in VoteMethod::ALL {
        let cfg = VoteConfig::with_method(method);
        let selections = bench
            .bundles
            .iter()
            .map(|b| vote(b, &cfg))
            .collect::<Result<Vec<_>, _>>()?;
        let eval = evaluate(&selections, &bench.manifest)?;
        let ties = selections.iter().filter(|s| s.tie_broken).count();
        println!("{:<14} accuracy {:.3}  ties broken {ties}", method.as_str(), eval.accuracy);
    }

    let first = &bench.bundles[0];
    let sel = vote(first, &VoteConfig::default())?;
    println!("\n{} -> {} (truth {})", sel.question_id, sel.answer, first.question.ground_truth);
    for t in &sel.tallies {
        println!(
            "  answer {:<4} count {:>2}  mean score {:>7.3}  R {:>7.3}",
            t.answer, t.count, t.mean_score, t.final_score
        );
    }
    Ok(())
}
