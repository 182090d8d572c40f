use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{ExperimentReport, RoundMetrics};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cannot encode {path}: {message}")]
    Encode { path: PathBuf, message: String },
}

const NA: &str = "NA";

fn cell(x: Option<f64>) -> String {
    x.map_or_else(|| NA.to_string(), |v| format!("{v:.6}"))
}

fn csv_bytes(path: &Path, header: Vec<String>, rows: Vec<Vec<String>>) -> Result<Vec<u8>, ReportError> {
    let encode = |e: csv::Error| ReportError::Encode { path: path.to_path_buf(), message: e.to_string() };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(encode)?;
    for r in rows {
        w.write_record(&r).map_err(encode)?;
    }
    w.into_inner().map_err(|e| ReportError::Encode { path: path.to_path_buf(), message: e.to_string() })
}

/// One row per round, one column per condition.
fn wide(report: &ExperimentReport, value: impl Fn(&RoundMetrics) -> Option<f64>) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["round".to_string()];
    header.extend(report.conditions.iter().cloned());
    let rows = (1..=report.final_round())
        .filter(|&r| report.rows.iter().any(|m| m.round == r))
        .map(|r| {
            let mut row = vec![r.to_string()];
            row.extend(report.conditions.iter().map(|c| cell(report.get(r, c).and_then(&value))));
            row
        })
        .collect();
    (header, rows)
}

/// Writes `metrics.csv` (one row per round and condition), one wide table
/// per metric, and `summary.json` into `dir`. The same report always
/// produces the same bytes.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(|source| ReportError::Io { path: dir.to_path_buf(), source })?;
    let mut files: Vec<(PathBuf, Vec<u8>)> = Vec::new();

    let path = dir.join("metrics.csv");
    let mut header: Vec<String> =
        ["round", "condition", "mean_ticks", "frac_optimal", "compliance"].map(String::from).to_vec();
    header.extend(report.tips.iter().map(|t| format!("cross_compliance_{t}")));
    let rows = report
        .rows
        .iter()
        .map(|m| {
            let mut row = vec![
                m.round.to_string(),
                m.condition.clone(),
                cell(Some(m.mean_ticks)),
                cell(Some(m.frac_optimal)),
                cell(m.compliance),
            ];
            row.extend(m.cross_compliance.iter().map(|&x| cell(x)));
            row
        })
        .collect();
    files.push((path.clone(), csv_bytes(&path, header, rows)?));

    let tables: [(&str, fn(&RoundMetrics) -> Option<f64>); 3] = [
        ("mean_ticks.csv", |m| Some(m.mean_ticks)),
        ("frac_optimal.csv", |m| Some(m.frac_optimal)),
        ("compliance.csv", |m| m.compliance),
    ];
    for (name, value) in tables {
        let path = dir.join(name);
        let (header, rows) = wide(report, value);
        files.push((path.clone(), csv_bytes(&path, header, rows)?));
    }

    let path = dir.join("summary.json");
    let mut json = serde_json::to_vec_pretty(report)
        .map_err(|e| ReportError::Encode { path: path.clone(), message: e.to_string() })?;
    json.push(b'\n');
    files.push((path, json));

    for (path, bytes) in &files {
        fs::write(path, bytes).map_err(|source| ReportError::Io { path: path.clone(), source })?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}
