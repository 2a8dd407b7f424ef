//! Accuracy against trace budget with several resampling runs, a beta sweep
//! and the length split, written as tidy tables.

use cdg::harness::{generate_synthetic_benchmark, run_experiment, write_report, ExperimentConfig, OutputFormat, SyntheticConfig};

fn main() -> anyhow::Result<()> {
    let bench = generate_synthetic_benchmark(&SyntheticConfig {
        questions: 60,
        traces_per_question: 32,
        correct_rate: 0.4,
        length_min: 100,
        length_max: 1200,
        seed: 11,
        ..Default::default()
    })?;
    let config = ExperimentConfig {
        budgets: vec![4, 8, 16, 32],
        runs_per_budget: 5,
        master_seed: 42,
        beta_sweep: vec![0.0, 2.0, 5.0, 10.0],
        length_split: true,
        ..Default::default()
    };
    let report = run_experiment(&bench.bundles, &config)?;

    println!("{:<14} {:>6} {:>8} {:>8}", "method", "L", "mean", "sd");
    for row in &report.summary {
        println!("{:<14} {:>6} {:>8.3} {:>8.3}", row.method, row.budget, row.mean_accuracy, row.std_accuracy);
    }
    for row in &report.length_split {
        println!("{:<14} {:<5} acc {:.3} mean length {:.0}", row.method, row.pool, row.accuracy, row.mean_length);
    }
    for row in &report.comparisons {
        println!("{}: W/T/L {}/{}/{} p {:?}", row.label, row.wins, row.ties, row.losses, row.p);
    }

    let dir = std::env::temp_dir().join("cdg-budget-ablation");
    let files = write_report(&dir, &report, OutputFormat::Csv)?;
    println!("wrote {} files under {}", files.len(), dir.display());
    Ok(())
}
