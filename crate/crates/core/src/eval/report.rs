//! Report persistence: one JSON object with per-image similarities plus flat
//! per-cluster and overall CSV tables. Output bytes depend only on the report.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::write_atomic;

use super::runner::{CellStatus, ExperimentReport};

pub const REPORT_FILE: &str = "report.json";
pub const PER_CLUSTER_FILE: &str = "per_cluster.csv";
pub const OVERALL_FILE: &str = "overall.csv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub report: PathBuf,
    pub per_cluster: PathBuf,
    pub overall: PathBuf,
}

#[derive(Serialize)]
struct PerClusterRow<'a> {
    cell: &'a str,
    strategy: &'a str,
    method: &'a str,
    prompt: &'a str,
    cluster_id: usize,
    n: usize,
    mean_sim: f64,
    coverage: f64,
}

#[derive(Serialize)]
struct OverallRow<'a> {
    cell: &'a str,
    strategy: &'a str,
    method: &'a str,
    prompt: &'a str,
    status: &'a str,
    n_clusters: usize,
    n_images: usize,
    mean_sim: Option<f64>,
    coverage: Option<f64>,
    cluster_mean_sim: Option<f64>,
    cluster_coverage: Option<f64>,
}

fn csv_bytes<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)
            .map_err(|e| Error::Eval(format!("csv encoding: {e}")))?;
    }
    w.into_inner()
        .map_err(|e| Error::Eval(format!("csv encoding: {e}")))
}

pub fn per_cluster_csv(report: &ExperimentReport) -> Result<Vec<u8>> {
    csv_bytes(report.cells.iter().flat_map(|c| {
        c.clusters.iter().map(move |e| PerClusterRow {
            cell: &c.cell,
            strategy: c.strategy.as_str(),
            method: c.method.as_str(),
            prompt: c.prompt.map_or("", |p| p.as_str()),
            cluster_id: e.cluster_id,
            n: e.n_images,
            mean_sim: e.mean_similarity,
            coverage: e.coverage_at_tau,
        })
    }))
}

pub fn overall_csv(report: &ExperimentReport) -> Result<Vec<u8>> {
    csv_bytes(report.cells.iter().map(|c| {
        let o = c.overall.as_ref();
        OverallRow {
            cell: &c.cell,
            strategy: c.strategy.as_str(),
            method: c.method.as_str(),
            prompt: c.prompt.map_or("", |p| p.as_str()),
            status: match c.status {
                CellStatus::Complete => "complete",
                CellStatus::Incomplete => "incomplete",
            },
            n_clusters: o.map_or(0, |o| o.n_clusters),
            n_images: o.map_or(0, |o| o.n_images),
            mean_sim: o.map(|o| o.mean_similarity),
            coverage: o.map(|o| o.coverage),
            cluster_mean_sim: o.map(|o| o.cluster_mean_similarity),
            cluster_coverage: o.map(|o| o.cluster_coverage),
        }
    }))
}

pub fn report_json(report: &ExperimentReport) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(report)
        .map_err(|e| Error::Eval(format!("report encoding: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes `report.json`, `per_cluster.csv` and `overall.csv` into `dir`.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<ReportFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = ReportFiles {
        report: dir.join(REPORT_FILE),
        per_cluster: dir.join(PER_CLUSTER_FILE),
        overall: dir.join(OVERALL_FILE),
    };
    write_atomic(&files.report, &report_json(report)?)?;
    write_atomic(&files.per_cluster, &per_cluster_csv(report)?)?;
    write_atomic(&files.overall, &overall_csv(report)?)?;
    Ok(files)
}

pub fn load_report(path: &Path) -> Result<ExperimentReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: format!("{}: {e}", path.display()),
    })
}
