use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Demonstrations chosen for one test instance, in selection order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub test_id: String,
    pub demo_ids: Vec<String>,
    pub instance_scores: Vec<f64>,
    pub set_score: Option<f64>,
    pub metric_name: String,
    pub seed: Option<u64>,
}

impl Selection {
    pub fn validate(&self) -> Result<()> {
        if self.demo_ids.len() != self.instance_scores.len() {
            return Err(Error::InvalidParameter(format!(
                "selection for {:?}: {} demo ids but {} scores",
                self.test_id,
                self.demo_ids.len(),
                self.instance_scores.len()
            )));
        }
        let mut seen = HashSet::new();
        for id in &self.demo_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidParameter(format!(
                    "selection for {:?}: demo {id:?} appears twice",
                    self.test_id
                )));
            }
        }
        Ok(())
    }
}

pub fn write_selections(path: impl AsRef<Path>, selections: &[Selection]) -> Result<()> {
    super::write_jsonl(path.as_ref(), selections)
}

pub fn read_selections(path: impl AsRef<Path>) -> Result<Vec<Selection>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let sel: Selection = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        sel.validate()?;
        out.push(sel);
    }
    Ok(out)
}
