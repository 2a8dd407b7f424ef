//! Token confidences from top-K logprobs, position-normalized bins and the
//! head-to-tail gain of one trace.

use cdg::confidence::{
    bin_trajectory, confidence_dynamic_gain, tail_bins_mean, token_confidence, ConfidenceTrajectory,
    FeatureParams, TraceFeatures,
};
use cdg::trace_io::{Payload, TokenLogprobs, TraceRecord};

fn main() -> anyhow::Result<()> {
    // A trace that hesitates early and commits near the end.
    let tokens: Vec<TokenLogprobs> = (0..45)
        .map(|i| {
            let sharp = 0.5 + 3.0 * i as f64 / 44.0;
            let logprobs = (0..5).map(|j| -(0.05 + sharp * j as f64 / 4.0)).collect();
            TokenLogprobs { logprobs, text: None }
        })
        .collect();

    println!("first token confidence: {:.4}", token_confidence(&tokens[0].logprobs)?);
    println!("last token confidence:  {:.4}", token_confidence(&tokens[44].logprobs)?);

    let record = TraceRecord::new("q", "t0", "7", None, Payload::TopK(tokens), None, Some(5))?;
    let trajectory = ConfidenceTrajectory::from_record(&record)?;
    let binned = bin_trajectory(&trajectory, 10)?;
    println!("bin sizes: {:?}", binned.bin_sizes);
    let means: Vec<String> = binned.bin_means.iter().map(|m| format!("{m:.3}")).collect();
    println!("bin means: [{}]", means.join(", "));

    for percent in [10.0, 20.0, 50.0] {
        println!(
            "P={percent:>4}%: gain {:+.4}, tail-only {:.4}",
            confidence_dynamic_gain(&binned, percent)?,
            tail_bins_mean(&binned, percent)?
        );
    }

    let f = TraceFeatures::compute(&record, &FeatureParams::default())?;
    println!("{f:#?}");
    Ok(())
}
