//! Reads a small trace file with one malformed and one orphan line, then
//! groups the survivors by question.

use std::io::Cursor;

use cdg::trace_io::{group_by_question, parse_manifest, parse_trace_stream};

const MANIFEST: &str = r#"#schema=1
[
  {"question_id": "q1", "ground_truth": "2/4", "dataset": "demo"},
  {"question_id": "q2", "ground_truth": "42", "dataset": "demo"}
]"#;

fn line(q: &str, t: &str, answer: &str, conf: f64) -> String {
    let values = vec![conf; 12];
    serde_json::json!({"question_id": q, "trace_id": t, "answer": answer, "conf": values}).to_string()
}

fn main() -> anyhow::Result<()> {
    let mut text = String::from("#schema=1\n");
    for l in [
        line("q1", "a", "0.5", 3.0),
        line("q1", "b", "\\boxed{1/2}", 2.5),
        line("q1", "c", "1/3", 1.0),
        line("q2", "a", "42", 4.0),
        r#"{"question_id": "q2", "trace_id": "b", "answer": "41", "conf": [1.0, 2.0]}"#.to_string(),
        line("q9", "a", "7", 1.0),
        "not json".to_string(),
    ] {
        text.push_str(&l);
        text.push('\n');
    }

    let manifest = parse_manifest(Cursor::new(MANIFEST))?;
    let parsed = parse_trace_stream(Cursor::new(text), 20)?;
    println!("accepted {} records", parsed.records.len());
    for err in &parsed.rejected {
        println!("  rejected {err}");
    }

    let grouped = group_by_question(parsed.records, &manifest)?;
    println!("orphans: {:?}", grouped.orphans.question_ids);
    for b in &grouped.bundles {
        println!("{} (truth {})", b.question_id(), b.question.canonical_ground_truth());
        for t in &b.traces {
            println!(
                "  {} raw={:<12} canonical={:<5} correct={:?}",
                t.trace_id,
                t.answer_raw,
                t.answer_canonical,
                t.correct
            );
        }
    }
    Ok(())
}
