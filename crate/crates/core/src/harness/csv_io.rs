//! Per-run trajectory CSVs.
//!
//! Floats are written with Rust's shortest round-trip formatting, which is
//! locale-independent and parses back to the identical bit pattern.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::RunReport;

pub const CSV_COLUMNS: [&str; 9] = [
    "t",
    "queries_cum",
    "eta",
    "f0_true",
    "max_constraint_true",
    "barrier_est",
    "g_norm",
    "gamma",
    "violated",
];

/// One CSV row; field order matches [`CSV_COLUMNS`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub t: usize,
    pub queries_cum: u64,
    pub eta: f64,
    pub f0_true: f64,
    pub max_constraint_true: f64,
    pub barrier_est: f64,
    pub g_norm: f64,
    pub gamma: f64,
    pub violated: bool,
}

pub fn rows(report: &RunReport) -> Vec<CsvRow> {
    report
        .trajectory
        .iter()
        .map(|r| CsvRow {
            t: r.t,
            queries_cum: r.queries_cum,
            eta: r.eta,
            f0_true: r.f0_true,
            max_constraint_true: r.max_constraint_true,
            barrier_est: r.barrier_est,
            g_norm: r.g_norm,
            gamma: r.gamma,
            violated: r.violated,
        })
        .collect()
}

pub fn emit_csv(report: &RunReport, path: &Path) -> Result<()> {
    let csv_err = |source| Error::Csv { path: path.to_path_buf(), source };
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err)?;
    writer.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for row in rows(report) {
        writer.serialize(row).map_err(csv_err)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let csv_err = |source| Error::Csv { path: path.to_path_buf(), source };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(String::from).collect();
    if header != CSV_COLUMNS {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!("unexpected header {header:?}"),
        });
    }
    reader.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err)
}
