//! Cross-policy comparison of finished experiments.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::run::AggregateRow;
use crate::error::HarnessError;

/// Sweep coordinates shared by comparable rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointKey {
    pub beta: f64,
    pub num_miners: usize,
    pub num_tasks: usize,
    pub transaction_kb: Option<f64>,
}

impl PointKey {
    fn of(row: &AggregateRow) -> Self {
        Self {
            beta: row.beta,
            num_miners: row.num_miners,
            num_tasks: row.num_tasks,
            transaction_kb: row.transaction_kb,
        }
    }

    /// Total order through the bit patterns, enough for grouping.
    fn sort_key(&self) -> (u64, usize, usize, Option<u64>) {
        (
            self.beta.to_bits(),
            self.num_miners,
            self.num_tasks,
            self.transaction_kb.map(f64::to_bits),
        )
    }
}

/// All policies' aggregates at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonEntry {
    pub point: PointKey,
    pub rows: Vec<AggregateRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub inputs: Vec<PathBuf>,
    pub entries: Vec<ComparisonEntry>,
}

impl Report {
    /// Every aggregate row, grouped by point in input order.
    pub fn rows(&self) -> impl Iterator<Item = &AggregateRow> {
        self.entries.iter().flat_map(|e| e.rows.iter())
    }
}

/// `aggregate.csv` files in `dir` and its immediate subdirectories, sorted.
pub fn find_aggregates(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut found = Vec::new();
    let direct = dir.join("aggregate.csv");
    if direct.is_file() {
        found.push(direct);
    }
    let entries = fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut subdirs: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    for sub in subdirs {
        let candidate = sub.join("aggregate.csv");
        if candidate.is_file() {
            found.push(candidate);
        }
    }
    Ok(found)
}

pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .collect::<Result<Vec<AggregateRow>, _>>()
        .map_err(HarnessError::from)
}

/// Merges aggregate files into one comparison. Every input must cover the
/// same set of sweep points.
pub fn summarize(inputs: &[PathBuf]) -> Result<Report, HarnessError> {
    if inputs.is_empty() {
        return Err(HarnessError::Summary("no aggregate.csv inputs".into()));
    }
    let mut grid: Option<Vec<PointKey>> = None;
    let mut grouped: BTreeMap<(u64, usize, usize, Option<u64>), ComparisonEntry> = BTreeMap::new();
    let mut order = Vec::new();
    for path in inputs {
        let rows = read_aggregate(path)?;
        let keys: Vec<PointKey> = rows.iter().map(PointKey::of).collect();
        let mut sorted: Vec<_> = keys.iter().map(PointKey::sort_key).collect();
        sorted.sort();
        match &grid {
            None => grid = Some(keys.clone()),
            Some(g) => {
                let mut expected: Vec<_> = g.iter().map(PointKey::sort_key).collect();
                expected.sort();
                if expected != sorted {
                    return Err(HarnessError::Summary(format!(
                        "{}: sweep points differ from {}",
                        path.display(),
                        inputs[0].display()
                    )));
                }
            }
        }
        for row in rows {
            let key = PointKey::of(&row);
            let entry = grouped.entry(key.sort_key()).or_insert_with(|| {
                order.push(key.sort_key());
                ComparisonEntry {
                    point: key,
                    rows: Vec::new(),
                }
            });
            entry.rows.push(row);
        }
    }
    let entries = order
        .into_iter()
        .map(|k| grouped.remove(&k).expect("grouped"))
        .collect();
    Ok(Report {
        inputs: inputs.to_vec(),
        entries,
    })
}

/// Writes `comparison.csv` and `comparison.json` into `out`.
pub fn write_report(report: &Report, out: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let csv_path = out.join("comparison.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    for row in report.rows() {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| HarnessError::io(&csv_path, e))?;
    let json_path = out.join("comparison.json");
    let text = serde_json::to_string_pretty(report)? + "\n";
    fs::write(&json_path, text).map_err(|e| HarnessError::io(&json_path, e))?;
    Ok(())
}
