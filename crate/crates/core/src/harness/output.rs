//! Report directory layout: `report.json`, `failures.json` and one tidy
//! table per analysis.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentReport, HarnessError};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format '{other}' (expected csv or json)")),
        }
    }
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut file = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, value)?;
    writeln!(file)?;
    Ok(())
}

pub(crate) fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn table<T: Serialize>(
    dir: &Path,
    name: &str,
    rows: &[T],
    format: OutputFormat,
    written: &mut Vec<PathBuf>,
) -> Result<(), HarnessError> {
    let path = match format {
        OutputFormat::Csv => {
            let p = dir.join(format!("{name}.csv"));
            write_csv(&p, rows)?;
            p
        }
        OutputFormat::Json => {
            let p = dir.join(format!("{name}.json"));
            write_json(&p, rows)?;
            p
        }
    };
    written.push(path);
    Ok(())
}

/// Writes the report into `dir` (created if needed) and returns the files
/// written. Tables with no rows are skipped except accuracy and summary.
pub fn write_report(dir: &Path, report: &ExperimentReport, format: OutputFormat) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    table(dir, "accuracy", &report.accuracy, format, &mut written)?;
    table(dir, "summary", &report.summary, format, &mut written)?;
    macro_rules! optional {
        ($($field:ident),*) => {
            $(
                if !report.$field.is_empty() {
                    table(dir, stringify!($field), &report.$field, format, &mut written)?;
                }
            )*
        };
    }
    optional!(
        pass_at_1,
        calibration,
        beta_sweep,
        percent_sweep,
        length_split,
        mask_agreement,
        separation,
        comparisons,
        direction,
        histograms,
        trace_features
    );
    let report_path = dir.join("report.json");
    write_json(&report_path, report)?;
    written.push(report_path);
    let failures_path = dir.join("failures.json");
    write_json(&failures_path, &report.failures)?;
    written.push(failures_path);
    Ok(written)
}
