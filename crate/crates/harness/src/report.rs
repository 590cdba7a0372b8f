//! Per-run summaries and side-by-side comparison tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use iclcover::corpus::read_selections;
use serde::Serialize;

use crate::coverage::{CoverageReport, AUDIT_SCHEMES};
use crate::error::{HarnessError, Result};
use crate::eval::{EvalSummary, EVAL_FILE};
use crate::io;
use crate::run::{read_run_info, SELECTIONS_FILE};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceRecord {
    pub test_id: String,
    pub demo_ids: Vec<String>,
    pub prediction: Option<String>,
    pub correct: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub dir: PathBuf,
    pub method: String,
    pub records: Vec<InstanceRecord>,
    /// Present once predictions have been evaluated.
    pub exact_match: Option<f64>,
    pub setcov_mean: Option<f64>,
    /// Mean substructure recall per scheme, once the run has been audited.
    pub recall: BTreeMap<String, f64>,
    pub runtime_secs: f64,
}

impl RunReport {
    pub fn load(dir: &Path) -> Result<Self> {
        let info = read_run_info(dir)?;
        let selections = read_selections(dir.join(SELECTIONS_FILE))?;
        let eval_path = dir.join(EVAL_FILE);
        let eval: Option<EvalSummary> = if eval_path.exists() {
            Some(io::read_json(&eval_path)?)
        } else {
            None
        };
        let by_id: BTreeMap<&str, (&str, bool)> = eval
            .iter()
            .flat_map(|e| &e.records)
            .map(|r| (r.test_id.as_str(), (r.prediction.as_str(), r.correct)))
            .collect();
        let records = selections
            .iter()
            .map(|s| {
                let hit = by_id.get(s.test_id.as_str());
                InstanceRecord {
                    test_id: s.test_id.clone(),
                    demo_ids: s.demo_ids.clone(),
                    prediction: hit.map(|h| h.0.to_string()),
                    correct: hit.map(|h| h.1),
                }
            })
            .collect();
        Ok(Self {
            dir: dir.to_path_buf(),
            method: info.method,
            records,
            exact_match: eval.map(|e| e.exact_match),
            setcov_mean: info.setcov_mean,
            recall: CoverageReport::load(dir)?.map(|c| c.mean_recall).unwrap_or_default(),
            runtime_secs: info.elapsed_secs,
        })
    }

    fn test_ids(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.test_id.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportTable {
    pub rows: Vec<RunReport>,
}

/// Loads runs made on the same test split, one row each, ordered by method then directory.
pub fn compare_report(dirs: &[PathBuf]) -> Result<ReportTable> {
    let mut rows = dirs.iter().map(|d| RunReport::load(d)).collect::<Result<Vec<_>>>()?;
    if let Some(first) = rows.first() {
        let mut split = first.test_ids();
        split.sort_unstable();
        for other in &rows[1..] {
            let mut ids = other.test_ids();
            ids.sort_unstable();
            if ids != split {
                return Err(HarnessError::SplitMismatch {
                    first: first.dir.clone(),
                    other: other.dir.clone(),
                });
            }
        }
    }
    rows.sort_by(|a, b| a.method.cmp(&b.method).then_with(|| a.dir.cmp(&b.dir)));
    Ok(ReportTable { rows })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

impl ReportTable {
    pub fn header() -> Vec<String> {
        let mut h = vec!["method".to_string(), "em".into(), "setcov_mean".into()];
        h.extend(AUDIT_SCHEMES.iter().map(|s| format!("recall_{s}")));
        h.push("runtime_s".into());
        h
    }

    fn cells(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let mut row = vec![r.method.clone(), cell(r.exact_match), cell(r.setcov_mean)];
                row.extend(AUDIT_SCHEMES.iter().map(|s| cell(r.recall.get(&s.to_string()).copied())));
                row.push(format!("{:.3}", r.runtime_secs));
                row
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let header = Self::header();
        let body = self.cells();
        let widths: Vec<usize> = (0..header.len())
            .map(|c| body.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in std::iter::once(&header).chain(&body) {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (v, w))| if i == 0 { format!("{v:<w$}") } else { format!("{v:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(Self::header())?;
        for row in self.cells() {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
