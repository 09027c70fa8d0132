//! Runlog readers and the `report` / `compare-traces` outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use dualrun_core::metrics::{summarize, MetricsConfig, MetricsSummary, PriceTable, RunSample};
use dualrun_core::model::{Annotations, Mode, ProgramUnit, RunRecord};
use dualrun_core::report::{build_harness_report, HarnessReport, ProgramHarnessResult};
use dualrun_core::trace::{divergence_point, TraceDigest};
use dualrun_core::SCHEMA_VERSION;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("runlog lines with a schema version other than `{SCHEMA_VERSION}`:\n{}", .0.join("\n"))]
    SchemaMismatch(Vec<String>),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
}

impl ReportError {
    /// Unreadable or invalid input is a usage error; failing to write
    /// outputs is a runtime failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            ReportError::Io(_) => 1,
            _ => 2,
        }
    }
}

/// Reads JSONL runlogs. Every line must carry the current schema version;
/// all offending lines are reported together.
pub fn read_runlogs(paths: &[PathBuf]) -> Result<Vec<RunRecord>, ReportError> {
    let mut records = Vec::new();
    let mut offending = Vec::new();
    for path in paths {
        let text = fs::read_to_string(path).map_err(|e| ReportError::Parse(format!("{}: {e}", path.display())))?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let at = format!("{}:{}", path.display(), i + 1);
            let value: Value = serde_json::from_str(line).map_err(|e| ReportError::Parse(format!("{at}: {e}")))?;
            match value.get("schema_version").and_then(Value::as_str) {
                Some(SCHEMA_VERSION) => {}
                other => {
                    offending.push(format!("{at}: {}", other.unwrap_or("<missing>")));
                    continue;
                }
            }
            let record: RunRecord =
                serde_json::from_value(value).map_err(|e| ReportError::Parse(format!("{at}: {e}")))?;
            records.push(record);
        }
    }
    if offending.is_empty() {
        Ok(records)
    } else {
        Err(ReportError::SchemaMismatch(offending))
    }
}

pub fn metrics_summary(
    records: &[RunRecord],
    config: &MetricsConfig,
    prices: Option<&PriceTable>,
) -> Result<MetricsSummary, ReportError> {
    let samples: Vec<RunSample> = records.iter().map(RunSample::from).collect();
    summarize(&samples, config, prices).map_err(|e| ReportError::Config(e.to_string()))
}

/// Picks each program's finalized run: highest CA, then lowest run index.
pub fn finalized_runs(records: &[RunRecord], mode: Mode) -> Vec<&RunRecord> {
    let mut best: BTreeMap<&str, &RunRecord> = BTreeMap::new();
    for r in records.iter().filter(|r| r.mode() == mode) {
        let slot = best.entry(r.program_id.as_str()).or_insert(r);
        let better =
            (r.ca_sample(), std::cmp::Reverse(r.run_index)) > (slot.ca_sample(), std::cmp::Reverse(slot.run_index));
        if better {
            *slot = r;
        }
    }
    best.into_values().collect()
}

/// Category counts over finalized runs. Deleted and inspect counts come
/// from the suite manifest when given. A program that never executed
/// contributes no pass or fail counts.
pub fn harness_report(records: &[RunRecord], mode: Mode, suite: Option<&[ProgramUnit]>) -> HarnessReport {
    let annotations: BTreeMap<&str, Annotations> =
        suite.unwrap_or_default().iter().map(|p| (p.id.as_str(), p.annotations)).collect();
    let results: Vec<ProgramHarnessResult> = finalized_runs(records, mode)
        .into_iter()
        .map(|r| {
            let a = annotations.get(r.program_id.as_str()).copied().unwrap_or_default();
            let (pass, fail) = if r.executed { (r.tests_passed, r.tests_total - r.tests_passed) } else { (0, 0) };
            ProgramHarnessResult {
                category: r.category,
                executed: r.executed,
                errored: r.error.is_some(),
                pass,
                fail,
                deleted: a.deleted,
                inspect: a.inspect,
            }
        })
        .collect();
    build_harness_report(&results)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub written: Vec<PathBuf>,
}

/// Writes `metrics.csv`, `metrics.json` and, per mode present in the
/// records, `harness-<mode>.csv` / `.json`.
pub fn write_report(
    records: &[RunRecord],
    config: &MetricsConfig,
    prices: Option<&PriceTable>,
    suite: Option<&[ProgramUnit]>,
    out: &Path,
) -> Result<ReportFiles, ReportError> {
    let summary = metrics_summary(records, config, prices)?;
    let io = |e: std::io::Error| ReportError::Io(format!("{}: {e}", out.display()));
    fs::create_dir_all(out).map_err(io)?;
    let mut written = Vec::new();
    let mut put = |name: String, text: String| -> Result<(), ReportError> {
        let path = out.join(name);
        fs::write(&path, text).map_err(io)?;
        written.push(path);
        Ok(())
    };
    put("metrics.csv".into(), summary.to_csv())?;
    put("metrics.json".into(), summary.to_json())?;
    let mut modes: Vec<Mode> = records.iter().map(RunRecord::mode).collect();
    modes.sort();
    modes.dedup();
    for mode in modes {
        let report = harness_report(records, mode, suite);
        report.validate().map_err(|e| ReportError::Config(e.to_string()))?;
        put(format!("harness-{}.csv", mode.slug()), report.to_csv())?;
        put(format!("harness-{}.json", mode.slug()), report.to_json())?;
    }
    Ok(ReportFiles { written })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Divergence {
    pub a: u32,
    pub b: u32,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceGroup {
    pub program_id: String,
    pub mode: Mode,
    pub runs: usize,
    pub distinct_hashes: usize,
    /// `"ok"` or `"insufficient repeats"` for single-run groups.
    pub status: String,
    /// Pairs of run indices whose traces differ, with the first differing
    /// entry. Equal pairs are omitted.
    pub divergences: Vec<Divergence>,
}

pub const INSUFFICIENT: &str = "insufficient repeats";

/// Per (program, mode): distinct trace hashes and pairwise divergence points.
pub fn compare_traces(records: &[RunRecord]) -> Vec<TraceGroup> {
    let mut groups: BTreeMap<(&str, Mode), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.program_id.as_str(), r.mode())).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((program, mode), mut runs)| {
            runs.sort_by_key(|r| r.run_index);
            let mut hashes: Vec<&TraceDigest> = runs.iter().map(|r| &r.trace_hash).collect();
            hashes.sort_by_key(|h| h.0);
            hashes.dedup();
            let mut divergences = Vec::new();
            for (i, a) in runs.iter().enumerate() {
                for b in &runs[i + 1..] {
                    if let Some(index) = divergence_point(&a.trace, &b.trace) {
                        divergences.push(Divergence { a: a.run_index, b: b.run_index, index });
                    }
                }
            }
            TraceGroup {
                program_id: program.to_string(),
                mode,
                runs: runs.len(),
                distinct_hashes: hashes.len(),
                status: if runs.len() < 2 { INSUFFICIENT.into() } else { "ok".into() },
                divergences,
            }
        })
        .collect()
}
