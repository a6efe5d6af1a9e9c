//! Metrics and analysis CSV output. Column order follows the field order of
//! the row types and never changes.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::analysis::{ConvergenceReport, CoverageStats};
use crate::error::{GapError, Result};
use crate::train::MetricsRow;

fn csv_err(e: csv::Error) -> GapError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => GapError::Io(io),
        other => GapError::Format(format!("csv: {other:?}")),
    }
}

fn write_rows<W: Write, R: Serialize>(out: W, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics<W: Write>(out: W, rows: &[MetricsRow]) -> Result<()> {
    write_rows(out, rows)
}

pub fn metrics_csv(rows: &[MetricsRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_metrics(&mut buf, rows)?;
    Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
}

pub fn save_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    write_metrics(std::fs::File::create(path)?, rows)
}

/// The CSV with the wall-clock column removed, for reproducibility checks.
pub fn without_wall_clock(csv_text: &str) -> String {
    csv_text
        .lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageRow {
    pub mode: &'static str,
    pub steps: usize,
    pub trials: usize,
    pub fraction: f64,
}

/// One row per observed steps-to-full-coverage value.
pub fn coverage_rows(mode: &'static str, stats: &CoverageStats) -> Vec<CoverageRow> {
    stats
        .histogram
        .iter()
        .map(|(&steps, &trials)| CoverageRow {
            mode,
            steps,
            trials,
            fraction: trials as f64 / stats.trials as f64,
        })
        .collect()
}

pub fn write_coverage<W: Write>(out: W, rows: &[CoverageRow]) -> Result<()> {
    write_rows(out, rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub round: usize,
    pub grad_norm_sq: f64,
    pub delta_sq: Option<f64>,
    pub grad_variance: f64,
}

pub fn convergence_rows(report: &ConvergenceReport) -> Vec<ConvergenceRow> {
    report
        .grad_norm_sq
        .iter()
        .enumerate()
        .map(|(q, &g)| ConvergenceRow {
            round: q,
            grad_norm_sq: g,
            delta_sq: report.delta_sq.get(q).copied(),
            grad_variance: report.grad_variance,
        })
        .collect()
}

pub fn write_convergence<W: Write>(out: W, rows: &[ConvergenceRow]) -> Result<()> {
    write_rows(out, rows)
}
