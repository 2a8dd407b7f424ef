use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use cdg::calibration::{estimate_r_b, rotating_calibration, BetaRule, NamedDataset, Pooling};
use cdg::confidence::DEFAULT_TOP_K;
use cdg::harness::{
    direction_rows, evaluate, generate_synthetic_benchmark, method_comparisons, run_experiment, write_report,
    AccuracyRow, ExperimentConfig, OutputFormat, SyntheticConfig,
};
use cdg::stats::{direction_analysis, separation_row};
use cdg::theory::{simulate_confidence_separation, GrpoBatchConfig};
use cdg::trace_io::{
    group_by_question, parse_manifest, parse_trace_stream, write_manifest, write_traces, QuestionBundle,
    QuestionManifest, TraceRecord,
};
use cdg::voting::{vote, VoteConfig, VoteMethod};

#[derive(Parser)]
#[command(name = "cdg", version, about = "Confidence-trajectory answer selection toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select one answer per question from a trace file.
    Vote(VoteCmd),
    /// Estimate r_b and the beta band from labeled traces.
    Calibrate(CalibrateCmd),
    /// Run an experiment grid described by a JSON config.
    Ablate(AblateCmd),
    /// Separation and method-comparison tables from feature or accuracy dumps.
    Stats(StatsCmd),
    /// Simulate the training-dynamics toy model.
    Simulate(SimulateCmd),
    /// Generate a synthetic trace set.
    Gen(GenCmd),
    /// Validate a trace file and rewrite it in the current schema.
    Convert(ConvertCmd),
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Trace file (JSON lines).
    #[arg(long)]
    traces: PathBuf,
    /// Question manifest (JSON array).
    #[arg(long)]
    manifest: PathBuf,
    /// Expected top-K width of logprob payloads.
    #[arg(long = "topk", default_value_t = DEFAULT_TOP_K)]
    top_k: usize,
}

#[derive(Args, Clone, Default)]
struct VoteFlags {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Head/tail share of bins, in percent.
    #[arg(long = "p")]
    percent: Option<f64>,
    #[arg(long)]
    bins: Option<usize>,
    /// Compute confidences only over unmasked tokens.
    #[arg(long)]
    mask_exclude: bool,
}

impl VoteFlags {
    fn apply(&self, cfg: &mut VoteConfig) {
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if let Some(b) = self.beta {
            cfg.beta = b;
        }
        if let Some(p) = self.percent {
            cfg.percent = p;
        }
        if let Some(n) = self.bins {
            cfg.bins = n;
        }
        if self.mask_exclude {
            cfg.mask_exclude = true;
        }
    }
}

#[derive(Args)]
struct VoteCmd {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value = "cdg")]
    method: String,
    #[command(flatten)]
    flags: VoteFlags,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    format: OutputFormat,
}

#[derive(Args)]
struct CalibrateCmd {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    flags: VoteFlags,
    /// Average per question before pooling.
    #[arg(long)]
    question_pooling: bool,
    /// Also run leave-one-dataset-out calibration with beta = multiple * r_b.
    #[arg(long)]
    rotate: bool,
    #[arg(long, default_value_t = 1.0)]
    multiple: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateCmd {
    /// Experiment config (JSON). Data comes from `traces`/`manifest` paths or a `synthetic` block.
    #[arg(long)]
    config: PathBuf,
    /// Replaces the configured budgets; repeatable.
    #[arg(long = "budget")]
    budgets: Vec<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Replaces the configured methods; repeatable.
    #[arg(long = "method")]
    methods: Vec<String>,
    #[arg(long = "topk")]
    top_k: Option<usize>,
    #[command(flatten)]
    flags: VoteFlags,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Args)]
struct StatsCmd {
    /// Per-trace feature table with `correct` and `cdg` columns (and optionally `dataset`).
    #[arg(long)]
    features: Option<PathBuf>,
    /// Accuracy table with `method, dataset, budget, run, accuracy` columns.
    #[arg(long)]
    accuracy: Option<PathBuf>,
    /// Method compared against all others in the accuracy table.
    #[arg(long, default_value = "cdg")]
    method: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    format: OutputFormat,
}

#[derive(Args)]
struct SimulateCmd {
    /// Toy-model config (JSON); defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of trials.
    #[arg(long, default_value_t = 100)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "topk")]
    top_k: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    format: OutputFormat,
}

#[derive(Args)]
struct GenCmd {
    /// Synthetic benchmark config (JSON); defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for traces.jsonl, manifest.json and targets.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Args)]
struct ConvertCmd {
    #[arg(long)]
    traces: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long = "topk", default_value_t = DEFAULT_TOP_K)]
    top_k: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// Whether a command finished with recoverable per-item failures.
enum Outcome {
    Complete,
    Partial,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Vote(c) => cmd_vote(c),
        Command::Calibrate(c) => cmd_calibrate(c),
        Command::Ablate(c) => cmd_ablate(c),
        Command::Stats(c) => cmd_stats(c),
        Command::Simulate(c) => cmd_simulate(c),
        Command::Gen(c) => cmd_gen(c),
        Command::Convert(c) => cmd_convert(c),
    };
    match result {
        Ok(Outcome::Complete) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[derive(Debug, Serialize)]
struct FailureEntry {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    error: String,
}

struct Loaded {
    manifest: Vec<QuestionManifest>,
    bundles: Vec<QuestionBundle>,
    failures: Vec<FailureEntry>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("cannot open {}", path.display()))?,
    ))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).with_context(|| format!("invalid JSON in {}", path.display()))
}

fn load(input: &InputArgs) -> Result<Loaded> {
    let manifest = parse_manifest(open(&input.manifest)?).context("reading manifest")?;
    load_with(&input.traces, manifest, input.top_k)
}

fn load_with(traces: &Path, manifest: Vec<QuestionManifest>, top_k: usize) -> Result<Loaded> {
    let parsed = parse_trace_stream(open(traces)?, top_k).context("reading traces")?;
    let mut failures: Vec<FailureEntry> = parsed
        .rejected
        .iter()
        .map(|e| FailureEntry {
            kind: "rejected_line".into(),
            line: Some(e.line),
            id: None,
            error: e.kind.to_string(),
        })
        .collect();
    let grouped = group_by_question(parsed.records, &manifest)?;
    for q in &grouped.orphans.question_ids {
        failures.push(FailureEntry {
            kind: "orphan_question".into(),
            line: None,
            id: Some(q.clone()),
            error: "question not in manifest".into(),
        });
    }
    Ok(Loaded {
        manifest,
        bundles: grouped.bundles,
        failures,
    })
}

fn emit_json<T: Serialize + ?Sized>(out: Option<&Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("cannot write {}", p.display())),
        None => match writeln!(io::stdout().lock(), "{text}") {
            Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
            _ => Ok(()),
        },
    }
}

fn emit_csv<T: Serialize>(out: Option<&Path>, rows: &[T]) -> Result<()> {
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(File::create(p).with_context(|| format!("cannot write {}", p.display()))?),
        None => Box::new(io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes failures next to `out` (or to stderr) and reports the outcome.
fn finish(out: Option<&Path>, failures: &[FailureEntry]) -> Result<Outcome> {
    if failures.is_empty() {
        return Ok(Outcome::Complete);
    }
    match out {
        Some(p) => {
            let path = failure_path(p);
            emit_json(Some(&path), failures)?;
            eprintln!("{} failures written to {}", failures.len(), path.display());
        }
        None => {
            for f in failures {
                eprintln!("failure: {}", serde_json::to_string(f)?);
            }
        }
    }
    Ok(Outcome::Partial)
}

fn failure_path(out: &Path) -> PathBuf {
    if out.is_dir() {
        return out.join("failures.json");
    }
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".failures.json");
    out.with_file_name(name)
}

#[derive(Serialize)]
struct SelectionRow<'a> {
    question_id: &'a str,
    method: VoteMethod,
    answer: &'a str,
    correct: bool,
    voters: usize,
    tie_broken: bool,
}

fn cmd_vote(c: VoteCmd) -> Result<Outcome> {
    let method: VoteMethod = c.method.parse()?;
    let mut cfg = VoteConfig {
        top_k: c.input.top_k,
        ..VoteConfig::with_method(method)
    };
    c.flags.apply(&mut cfg);
    cfg.validate()?;
    let mut data = load(&c.input)?;
    let mut selections = Vec::new();
    for b in &data.bundles {
        match vote(b, &cfg) {
            Ok(s) => selections.push(s),
            Err(e) => data.failures.push(FailureEntry {
                kind: "vote".into(),
                line: None,
                id: Some(b.question_id().to_owned()),
                error: e.to_string(),
            }),
        }
    }
    let eval = evaluate(&selections, &data.manifest)?;
    eprintln!(
        "{}: {}/{} correct ({:.4})",
        method, eval.correct, eval.questions, eval.accuracy
    );
    let out = c.out.as_deref();
    match c.format {
        OutputFormat::Json => emit_json(out, &selections)?,
        OutputFormat::Csv => {
            let truths: BTreeMap<&str, String> = data
                .manifest
                .iter()
                .map(|q| (q.question_id.as_str(), q.canonical_ground_truth()))
                .collect();
            let rows: Vec<SelectionRow<'_>> = selections
                .iter()
                .map(|s| SelectionRow {
                    question_id: &s.question_id,
                    method: s.method,
                    answer: &s.answer,
                    correct: truths.get(s.question_id.as_str()) == Some(&s.answer),
                    voters: s.voters,
                    tie_broken: s.tie_broken,
                })
                .collect();
            emit_csv(out, &rows)?
        }
    }
    finish(out, &data.failures)
}

fn cmd_calibrate(c: CalibrateCmd) -> Result<Outcome> {
    let mut cfg = VoteConfig {
        top_k: c.input.top_k,
        ..VoteConfig::default()
    };
    c.flags.apply(&mut cfg);
    cfg.validate()?;
    let data = load(&c.input)?;
    let pooling = if c.question_pooling { Pooling::Questions } else { Pooling::Traces };
    let params = cfg.feature_params();
    let overall = estimate_r_b(&data.bundles, &params, pooling)?;
    let mut by_dataset: BTreeMap<String, Vec<QuestionBundle>> = BTreeMap::new();
    for b in &data.bundles {
        by_dataset.entry(b.question.dataset.clone()).or_default().push(b.clone());
    }
    let mut per_dataset = BTreeMap::new();
    let mut failures = data.failures;
    for (name, bundles) in &by_dataset {
        match estimate_r_b(bundles, &params, pooling) {
            Ok(e) => {
                per_dataset.insert(name.clone(), e);
            }
            Err(e) => failures.push(FailureEntry {
                kind: "calibration".into(),
                line: None,
                id: Some(name.clone()),
                error: e.to_string(),
            }),
        }
    }
    let rotation = if c.rotate {
        let datasets: Vec<NamedDataset> = by_dataset
            .into_iter()
            .map(|(name, bundles)| NamedDataset { name, bundles })
            .collect();
        Some(rotating_calibration(
            &datasets,
            &BetaRule::RbMultiple { multiple: c.multiple },
            &cfg,
            pooling,
        )?)
    } else {
        None
    };
    emit_json(
        c.out.as_deref(),
        &serde_json::json!({
            "overall": overall,
            "per_dataset": per_dataset,
            "rotation": rotation,
        }),
    )?;
    finish(c.out.as_deref(), &failures)
}

#[derive(Deserialize)]
struct AblateFile {
    #[serde(flatten)]
    experiment: ExperimentConfig,
    traces: Option<PathBuf>,
    manifest: Option<PathBuf>,
    synthetic: Option<SyntheticConfig>,
    #[serde(default = "default_top_k")]
    top_k: usize,
}

fn default_top_k() -> usize {
    DEFAULT_TOP_K
}

fn cmd_ablate(c: AblateCmd) -> Result<Outcome> {
    let spec: AblateFile = read_json(&c.config)?;
    let base = c.config.parent().unwrap_or(Path::new("."));
    let mut exp = spec.experiment;
    if !c.budgets.is_empty() {
        exp.budgets = c.budgets.clone();
    }
    if let Some(r) = c.runs {
        exp.runs_per_budget = r;
    }
    if let Some(s) = c.seed {
        exp.master_seed = s;
    }
    if !c.methods.is_empty() {
        exp.methods = c
            .methods
            .iter()
            .map(|m| Ok(VoteConfig::with_method(m.parse()?)))
            .collect::<Result<_>>()?;
    }
    let top_k = c.top_k.unwrap_or(spec.top_k);
    for m in &mut exp.methods {
        c.flags.apply(m);
        m.top_k = top_k;
    }
    let (bundles, mut failures) = match (spec.traces, spec.manifest, spec.synthetic) {
        (Some(t), Some(m), None) => {
            let manifest = parse_manifest(open(&base.join(m))?).context("reading manifest")?;
            let data = load_with(&base.join(t), manifest, top_k)?;
            (data.bundles, data.failures)
        }
        (None, None, Some(s)) => (generate_synthetic_benchmark(&s)?.bundles, Vec::new()),
        _ => bail!("config must name either `traces` and `manifest`, or a `synthetic` block"),
    };
    let report = run_experiment(&bundles, &exp)?;
    let written = write_report(&c.out, &report, c.format)?;
    eprintln!("wrote {} files to {}", written.len(), c.out.display());
    for f in &report.failures {
        failures.push(FailureEntry {
            kind: f.stage.clone(),
            line: None,
            id: f.question_id.clone(),
            error: f.error.clone(),
        });
    }
    if !failures.is_empty() {
        eprintln!("{} failures; see {}", failures.len(), c.out.join("failures.json").display());
        if report.failures.len() != failures.len() {
            emit_json(Some(&c.out.join("input_failures.json")), &failures[..failures.len() - report.failures.len()])?;
        }
        return Ok(Outcome::Partial);
    }
    Ok(Outcome::Complete)
}

#[derive(Deserialize)]
struct FeatureDump {
    #[serde(default)]
    dataset: Option<String>,
    correct: Option<bool>,
    cdg: f64,
}

fn cmd_stats(c: StatsCmd) -> Result<Outcome> {
    if c.features.is_none() && c.accuracy.is_none() {
        bail!("give --features and/or --accuracy");
    }
    let mut failures = Vec::new();
    let mut separation = Vec::new();
    let mut direction = Vec::new();
    if let Some(path) = &c.features {
        let mut groups: BTreeMap<String, Vec<(bool, f64)>> = BTreeMap::new();
        for row in csv::Reader::from_path(path)?.deserialize::<FeatureDump>() {
            let row = row.with_context(|| format!("reading {}", path.display()))?;
            if let Some(correct) = row.correct {
                groups
                    .entry(row.dataset.unwrap_or_else(|| "default".into()))
                    .or_default()
                    .push((correct, row.cdg));
            }
        }
        for (name, pairs) in &groups {
            let plus: Vec<f64> = pairs.iter().filter(|p| p.0).map(|p| p.1).collect();
            let minus: Vec<f64> = pairs.iter().filter(|p| !p.0).map(|p| p.1).collect();
            match separation_row(name, &plus, &minus) {
                Ok(r) => separation.push(r),
                Err(e) => failures.push(FailureEntry {
                    kind: "separation".into(),
                    line: None,
                    id: Some(name.clone()),
                    error: e.to_string(),
                }),
            }
            match direction_analysis(pairs) {
                Ok(d) => direction.extend(direction_rows(name, &d)),
                Err(e) => failures.push(FailureEntry {
                    kind: "direction".into(),
                    line: None,
                    id: Some(name.clone()),
                    error: e.to_string(),
                }),
            }
        }
    }
    let mut comparisons = Vec::new();
    if let Some(path) = &c.accuracy {
        let rows = csv::Reader::from_path(path)?
            .deserialize::<AccuracyRow>()
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("reading {}", path.display()))?;
        if !rows.iter().any(|r| r.method == c.method) {
            bail!("method '{}' not found in {}", c.method, path.display());
        }
        for (name, row) in method_comparisons(&rows, &c.method) {
            match row {
                Ok(r) => comparisons.push(r),
                Err(e) => failures.push(FailureEntry {
                    kind: "comparison".into(),
                    line: None,
                    id: Some(name),
                    error: e.to_string(),
                }),
            }
        }
    }
    match c.format {
        OutputFormat::Json => emit_json(
            c.out.as_deref(),
            &serde_json::json!({
                "separation": separation,
                "direction": direction,
                "comparisons": comparisons,
            }),
        )?,
        OutputFormat::Csv => {
            let Some(dir) = c.out.as_deref() else {
                bail!("--format csv writes several tables and needs --out DIR");
            };
            fs::create_dir_all(dir)?;
            emit_csv(Some(&dir.join("separation.csv")), &separation)?;
            emit_csv(Some(&dir.join("direction.csv")), &direction)?;
            emit_csv(Some(&dir.join("comparisons.csv")), &comparisons)?;
        }
    }
    finish(c.out.as_deref(), &failures)
}

fn cmd_simulate(c: SimulateCmd) -> Result<Outcome> {
    let mut cfg: GrpoBatchConfig = match &c.config {
        Some(p) => read_json(p)?,
        None => GrpoBatchConfig::default(),
    };
    if let Some(k) = c.top_k {
        cfg.top_k = k;
    }
    let report = simulate_confidence_separation(&cfg, c.runs, c.seed)?;
    eprintln!(
        "bound {:.6}, mean separation {:.6}, min {:.6}, all positive: {}",
        report.bound.value, report.summary.mean_separation, report.summary.min_separation, report.summary.all_positive
    );
    match c.format {
        OutputFormat::Json => emit_json(c.out.as_deref(), &report)?,
        OutputFormat::Csv => emit_csv(c.out.as_deref(), &report.trials)?,
    }
    Ok(Outcome::Complete)
}

fn cmd_gen(c: GenCmd) -> Result<Outcome> {
    let mut cfg: SyntheticConfig = match &c.config {
        Some(p) => read_json(p)?,
        None => SyntheticConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let bench = generate_synthetic_benchmark(&cfg)?;
    fs::create_dir_all(&c.out)?;
    write_traces(File::create(c.out.join("traces.jsonl"))?, &bench.records())?;
    write_manifest(File::create(c.out.join("manifest.json"))?, &bench.manifest)?;
    match c.format {
        OutputFormat::Json => emit_json(Some(&c.out.join("targets.json")), &bench.targets)?,
        OutputFormat::Csv => emit_csv(Some(&c.out.join("targets.csv")), &bench.targets)?,
    }
    eprintln!(
        "{} questions, {} traces written to {}",
        bench.manifest.len(),
        bench.targets.len(),
        c.out.display()
    );
    Ok(Outcome::Complete)
}

fn cmd_convert(c: ConvertCmd) -> Result<Outcome> {
    let parsed = parse_trace_stream(open(&c.traces)?, c.top_k).context("reading traces")?;
    fs::create_dir_all(&c.out)?;
    let mut failures: Vec<FailureEntry> = parsed
        .rejected
        .iter()
        .map(|e| FailureEntry {
            kind: "rejected_line".into(),
            line: Some(e.line),
            id: None,
            error: e.kind.to_string(),
        })
        .collect();
    let mut records: Vec<TraceRecord> = parsed.records;
    if let Some(m) = &c.manifest {
        let manifest = parse_manifest(open(m)?).context("reading manifest")?;
        let grouped = group_by_question(records, &manifest)?;
        for q in &grouped.orphans.question_ids {
            failures.push(FailureEntry {
                kind: "orphan_question".into(),
                line: None,
                id: Some(q.clone()),
                error: "question not in manifest".into(),
            });
        }
        records = grouped.bundles.into_iter().flat_map(|b| b.traces).collect();
        write_manifest(File::create(c.out.join("manifest.json"))?, &manifest)?;
    }
    write_traces(File::create(c.out.join("traces.jsonl"))?, &records)?;
    eprintln!("{} records kept, {} failures", records.len(), failures.len());
    finish(Some(&c.out), &failures)
}
