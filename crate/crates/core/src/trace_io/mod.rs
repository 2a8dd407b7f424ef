//! Trace and manifest ingestion.
//!
//! Trace files are line-delimited JSON, one sampled reasoning trace per line.
//! Each line carries either per-token top-K logprobs (`tokens`) or precomputed
//! per-token confidences (`conf`), never both. Lines starting with `#` are
//! comments; a leading `#schema=1` line marks the format version.

mod answer;

pub use answer::normalize_answer;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confidence::MIN_TRACE_TOKENS;

/// Current trace/manifest schema version.
pub const SCHEMA_VERSION: u32 = 1;
/// Logprobs in `(0, LOGPROB_SLACK]` are treated as serializer rounding and clamped to 0.
pub const LOGPROB_SLACK: f64 = 1e-6;

/// Why a single record was rejected.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordError {
    #[error("malformed line: {0}")]
    MalformedLine(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("non-finite value at token {position}")]
    NonFiniteValue { position: usize },
    #[error("logprob {value} at token {position} is positive")]
    PositiveLogprob { position: usize, value: f64 },
    #[error("negative confidence {value} at token {position}")]
    NegativeConfidence { position: usize, value: f64 },
    #[error("trace has {tokens} tokens, minimum is {MIN_TRACE_TOKENS}")]
    TraceTooShort { tokens: usize },
    #[error("token {position} has {found} logprobs, expected {expected}")]
    WidthMismatch {
        position: usize,
        expected: usize,
        found: usize,
    },
}

/// A rejected line in a trace stream.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {kind}")]
pub struct LineError {
    pub line: usize,
    pub kind: RecordError,
}

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Line(#[from] LineError),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("duplicate question_id '{0}' in manifest")]
    DuplicateQuestion(String),
    #[error("empty ground truth for question '{0}'")]
    EmptyGroundTruth(String),
    #[error("duplicate trace_id '{trace_id}' for question '{question_id}'")]
    DuplicateTraceId {
        question_id: String,
        trace_id: String,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Top-K logprobs observed at one generated token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprobs {
    #[serde(rename = "lp")]
    pub logprobs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

/// Per-token confidence source of a trace.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    TopK(Vec<TokenLogprobs>),
    Confidences(Vec<f64>),
}

impl Payload {
    pub fn len(&self) -> usize {
        match self {
            Payload::TopK(tokens) => tokens.len(),
            Payload::Confidences(values) => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One sampled reasoning trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub question_id: String,
    pub trace_id: String,
    pub answer_raw: String,
    pub answer_canonical: String,
    pub correct: Option<bool>,
    pub payload: Payload,
    /// `true` marks tokens that participate in confidence statistics.
    pub mask: Option<Vec<bool>>,
}

impl TraceRecord {
    /// Builds a validated record. `expected_width` checks every top-K vector
    /// length when given. Logprobs within `LOGPROB_SLACK` above zero are clamped.
    pub fn new(
        question_id: impl Into<String>,
        trace_id: impl Into<String>,
        answer: impl Into<String>,
        correct: Option<bool>,
        payload: Payload,
        mask: Option<Vec<bool>>,
        expected_width: Option<usize>,
    ) -> Result<Self, RecordError> {
        let payload = sanitize_payload(payload, expected_width)?;
        let tokens = payload.len();
        if tokens < MIN_TRACE_TOKENS {
            return Err(RecordError::TraceTooShort { tokens });
        }
        if let Some(mask) = &mask {
            if mask.len() != tokens {
                return Err(RecordError::SchemaViolation(format!(
                    "mask has {} entries for {tokens} tokens",
                    mask.len()
                )));
            }
        }
        let answer_raw = answer.into();
        Ok(TraceRecord {
            question_id: question_id.into(),
            trace_id: trace_id.into(),
            answer_canonical: normalize_answer(&answer_raw),
            answer_raw,
            correct,
            payload,
            mask,
        })
    }

    /// Convenience constructor for precomputed confidences.
    pub fn with_confidences(
        question_id: impl Into<String>,
        trace_id: impl Into<String>,
        answer: impl Into<String>,
        confidences: Vec<f64>,
    ) -> Result<Self, RecordError> {
        Self::new(
            question_id,
            trace_id,
            answer,
            None,
            Payload::Confidences(confidences),
            None,
            None,
        )
    }

    pub fn token_count(&self) -> usize {
        self.payload.len()
    }

    /// Top-K width of the logprob payload, `None` for precomputed confidences.
    pub fn top_k_width(&self) -> Option<usize> {
        match &self.payload {
            Payload::TopK(tokens) => tokens.first().map(|t| t.logprobs.len()),
            Payload::Confidences(_) => None,
        }
    }
}

fn sanitize_payload(payload: Payload, expected_width: Option<usize>) -> Result<Payload, RecordError> {
    match payload {
        Payload::TopK(mut tokens) => {
            for (position, token) in tokens.iter_mut().enumerate() {
                if let Some(expected) = expected_width {
                    if token.logprobs.len() != expected {
                        return Err(RecordError::WidthMismatch {
                            position,
                            expected,
                            found: token.logprobs.len(),
                        });
                    }
                }
                if token.logprobs.is_empty() {
                    return Err(RecordError::SchemaViolation(format!(
                        "token {position} has an empty logprob vector"
                    )));
                }
                for lp in token.logprobs.iter_mut() {
                    if !lp.is_finite() {
                        return Err(RecordError::NonFiniteValue { position });
                    }
                    if *lp > LOGPROB_SLACK {
                        return Err(RecordError::PositiveLogprob {
                            position,
                            value: *lp,
                        });
                    }
                    if *lp > 0.0 {
                        *lp = 0.0;
                    }
                }
            }
            Ok(Payload::TopK(tokens))
        }
        Payload::Confidences(values) => {
            for (position, &value) in values.iter().enumerate() {
                if !value.is_finite() {
                    return Err(RecordError::NonFiniteValue { position });
                }
                if value < 0.0 {
                    return Err(RecordError::NegativeConfidence { position, value });
                }
            }
            Ok(Payload::Confidences(values))
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct WireRecord {
    question_id: String,
    trace_id: String,
    answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tokens: Option<Vec<TokenLogprobs>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    conf: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<Vec<bool>>,
}

/// Outcome of reading a trace stream: accepted records plus per-line rejects.
#[derive(Debug, Default)]
pub struct ParsedTraces {
    pub records: Vec<TraceRecord>,
    pub rejected: Vec<LineError>,
}

impl ParsedTraces {
    /// Fails on the first rejected line.
    pub fn into_strict(self) -> Result<Vec<TraceRecord>, LineError> {
        match self.rejected.into_iter().next() {
            Some(err) => Err(err),
            None => Ok(self.records),
        }
    }
}

/// Parses one JSON line into a record.
pub fn parse_trace_line(line: &str, top_k: Option<usize>) -> Result<TraceRecord, RecordError> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| RecordError::MalformedLine(e.to_string()))?;
    let wire: WireRecord =
        serde_json::from_value(value).map_err(|e| RecordError::SchemaViolation(e.to_string()))?;
    let payload = match (wire.tokens, wire.conf) {
        (Some(tokens), None) => Payload::TopK(tokens),
        (None, Some(conf)) => Payload::Confidences(conf),
        (Some(_), Some(_)) => {
            return Err(RecordError::SchemaViolation(
                "both `tokens` and `conf` present".into(),
            ))
        }
        (None, None) => {
            return Err(RecordError::SchemaViolation(
                "one of `tokens` or `conf` is required".into(),
            ))
        }
    };
    TraceRecord::new(
        wire.question_id,
        wire.trace_id,
        wire.answer,
        wire.correct,
        payload,
        wire.mask,
        top_k,
    )
}

/// Streams a trace file. Malformed lines are collected with their 1-based
/// line numbers; only I/O failures abort the read.
pub fn parse_trace_stream<R: BufRead>(reader: R, top_k: usize) -> Result<ParsedTraces, TraceIoError> {
    let mut parsed = ParsedTraces::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match parse_trace_line(trimmed, Some(top_k)) {
            Ok(record) => parsed.records.push(record),
            Err(kind) => parsed.rejected.push(LineError { line: idx + 1, kind }),
        }
    }
    Ok(parsed)
}

/// Serializes a record as a single JSON line (no trailing newline).
pub fn trace_to_line(record: &TraceRecord) -> String {
    let (tokens, conf) = match &record.payload {
        Payload::TopK(tokens) => (Some(tokens.clone()), None),
        Payload::Confidences(values) => (None, Some(values.clone())),
    };
    let wire = WireRecord {
        question_id: record.question_id.clone(),
        trace_id: record.trace_id.clone(),
        answer: record.answer_raw.clone(),
        correct: record.correct,
        tokens,
        conf,
        mask: record.mask.clone(),
    };
    serde_json::to_string(&wire).expect("trace records always serialize")
}

/// Writes records as a trace file with a `#schema=` header line.
pub fn write_traces<W: Write>(mut out: W, records: &[TraceRecord]) -> std::io::Result<()> {
    writeln!(out, "#schema={SCHEMA_VERSION}")?;
    for record in records {
        writeln!(out, "{}", trace_to_line(record))?;
    }
    Ok(())
}

/// One benchmark question with its reference answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionManifest {
    pub question_id: String,
    pub ground_truth: String,
    #[serde(default)]
    pub dataset: String,
    #[serde(default)]
    pub metadata: serde_json::Map<String, serde_json::Value>,
}

impl QuestionManifest {
    pub fn canonical_ground_truth(&self) -> String {
        normalize_answer(&self.ground_truth)
    }
}

/// Reads a manifest (JSON array), skipping leading `#` comment lines.
pub fn parse_manifest<R: BufRead>(reader: R) -> Result<Vec<QuestionManifest>, TraceIoError> {
    let mut body = String::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim_start().starts_with('#') {
            continue;
        }
        body.push_str(&line);
        body.push('\n');
    }
    let entries: Vec<QuestionManifest> =
        serde_json::from_str(&body).map_err(|e| TraceIoError::Manifest(e.to_string()))?;
    validate_manifest(&entries)?;
    Ok(entries)
}

pub fn validate_manifest(entries: &[QuestionManifest]) -> Result<(), TraceIoError> {
    let mut seen = BTreeSet::new();
    for entry in entries {
        if !seen.insert(entry.question_id.as_str()) {
            return Err(TraceIoError::DuplicateQuestion(entry.question_id.clone()));
        }
        if entry.ground_truth.trim().is_empty() {
            return Err(TraceIoError::EmptyGroundTruth(entry.question_id.clone()));
        }
    }
    Ok(())
}

pub fn write_manifest<W: Write>(mut out: W, entries: &[QuestionManifest]) -> Result<(), TraceIoError> {
    writeln!(out, "#schema={SCHEMA_VERSION}")?;
    serde_json::to_writer_pretty(&mut out, entries)?;
    writeln!(out)?;
    Ok(())
}

/// A question together with all of its sampled traces.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionBundle {
    pub question: QuestionManifest,
    pub traces: Vec<TraceRecord>,
}

impl QuestionBundle {
    pub fn question_id(&self) -> &str {
        &self.question.question_id
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }
}

/// Records whose question is absent from the manifest.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OrphanReport {
    pub question_ids: BTreeSet<String>,
    pub trace_count: usize,
}

#[derive(Debug, Clone)]
pub struct GroupedTraces {
    pub bundles: Vec<QuestionBundle>,
    pub orphans: OrphanReport,
}

/// Bundles records by question in manifest order and fills missing
/// correctness labels from the canonical ground truth.
pub fn group_by_question(
    records: Vec<TraceRecord>,
    manifest: &[QuestionManifest],
) -> Result<GroupedTraces, TraceIoError> {
    let index: BTreeMap<&str, usize> = manifest
        .iter()
        .enumerate()
        .map(|(i, q)| (q.question_id.as_str(), i))
        .collect();
    let truths: Vec<String> = manifest.iter().map(|q| q.canonical_ground_truth()).collect();
    let mut slots: Vec<Vec<TraceRecord>> = vec![Vec::new(); manifest.len()];
    let mut seen: Vec<BTreeSet<String>> = vec![BTreeSet::new(); manifest.len()];
    let mut orphans = OrphanReport::default();

    for mut record in records {
        let Some(&slot) = index.get(record.question_id.as_str()) else {
            orphans.question_ids.insert(record.question_id.clone());
            orphans.trace_count += 1;
            continue;
        };
        if !seen[slot].insert(record.trace_id.clone()) {
            return Err(TraceIoError::DuplicateTraceId {
                question_id: record.question_id,
                trace_id: record.trace_id,
            });
        }
        if record.correct.is_none() {
            record.correct = Some(record.answer_canonical == truths[slot]);
        }
        slots[slot].push(record);
    }

    let bundles = manifest
        .iter()
        .zip(slots)
        .filter(|(_, traces)| !traces.is_empty())
        .map(|(question, traces)| QuestionBundle {
            question: question.clone(),
            traces,
        })
        .collect();
    Ok(GroupedTraces { bundles, orphans })
}
