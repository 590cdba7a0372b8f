use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dependency parse of one instance's input.
///
/// `heads[i]` is the index of token `i`'s head, or `-1` for the root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseRecord {
    pub id: String,
    pub tokens: Vec<String>,
    pub lemmas: Vec<String>,
    pub heads: Vec<i64>,
    pub dep_labels: Vec<String>,
}

pub type ParseMap = HashMap<String, ParseRecord>;

impl ParseRecord {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Checks field lengths and that the head links form a single tree.
    pub fn validate(&self) -> Result<()> {
        let n = self.tokens.len();
        let err = |message: String| Error::InvalidParse {
            id: self.id.clone(),
            message,
        };
        if self.lemmas.len() != n || self.heads.len() != n || self.dep_labels.len() != n {
            return Err(err(format!(
                "field length mismatch: {} tokens, {} lemmas, {} heads, {} labels",
                n,
                self.lemmas.len(),
                self.heads.len(),
                self.dep_labels.len()
            )));
        }
        for (i, &h) in self.heads.iter().enumerate() {
            if h < -1 || h >= n as i64 {
                return Err(err(format!("token {i} has out-of-range head {h}")));
            }
            if h == i as i64 {
                return Err(err(format!("cycle: token {i} heads itself")));
            }
        }
        // 0 = unvisited, 1 = on current path, 2 = known to reach the root
        let mut state = vec![0u8; n];
        for start in 0..n {
            let mut path = Vec::new();
            let mut cur = start as i64;
            while cur >= 0 && state[cur as usize] != 2 {
                let c = cur as usize;
                if state[c] == 1 {
                    return Err(err(format!("cycle through token {c}")));
                }
                state[c] = 1;
                path.push(c);
                cur = self.heads[c];
            }
            for c in path {
                state[c] = 2;
            }
        }
        match self.heads.iter().filter(|&&h| h == -1).count() {
            1 => Ok(()),
            0 => Err(err("no root".into())),
            k => Err(err(format!("multiple roots ({k})"))),
        }
    }

    pub fn root(&self) -> Option<usize> {
        self.heads.iter().position(|&h| h == -1)
    }

    /// Children of each token, in token order.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut children = vec![Vec::new(); self.tokens.len()];
        for (i, &h) in self.heads.iter().enumerate() {
            if h >= 0 {
                children[h as usize].push(i);
            }
        }
        children
    }
}

/// Loads a JSONL file of parse records and validates every tree.
pub fn load_parses(path: impl AsRef<Path>) -> Result<ParseMap> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut map = ParseMap::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ParseRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message: e.to_string(),
        })?;
        rec.validate()?;
        if map.contains_key(&rec.id) {
            return Err(Error::DuplicateId {
                path: path.to_path_buf(),
                line: lineno,
                id: rec.id,
            });
        }
        map.insert(rec.id.clone(), rec);
    }
    Ok(map)
}

/// Writes parse records as JSONL in the order given.
pub fn write_parses<'a>(path: impl AsRef<Path>, records: impl IntoIterator<Item = &'a ParseRecord>) -> Result<()> {
    let records: Vec<&ParseRecord> = records.into_iter().collect();
    super::write_jsonl(path.as_ref(), &records)
}
