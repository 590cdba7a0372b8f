use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One pool or test example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub input: String,
    #[serde(default)]
    pub output: String,
}

impl Instance {
    pub fn new(id: impl Into<String>, input: impl Into<String>, output: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            input: input.into(),
            output: output.into(),
        }
    }

    fn check(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::InvalidInstance {
                id: self.id.clone(),
                message: "empty id".into(),
            });
        }
        if self.input.is_empty() {
            return Err(Error::InvalidInstance {
                id: self.id.clone(),
                message: "empty input".into(),
            });
        }
        Ok(())
    }
}

/// An ordered collection of instances with an id index.
///
/// Iteration order is the order of the source file and never changes after
/// construction.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CandidatePool {
    instances: Vec<Instance>,
    index: HashMap<String, usize>,
}

impl CandidatePool {
    pub fn new(instances: Vec<Instance>) -> Result<Self> {
        let mut index = HashMap::with_capacity(instances.len());
        for (pos, inst) in instances.iter().enumerate() {
            inst.check()?;
            if index.insert(inst.id.clone(), pos).is_some() {
                return Err(Error::DuplicateId {
                    path: "<memory>".into(),
                    line: pos + 1,
                    id: inst.id.clone(),
                });
            }
        }
        Ok(Self { instances, index })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Instance> {
        self.instances.iter()
    }

    pub fn get(&self, id: &str) -> Option<&Instance> {
        self.position(id).map(|p| &self.instances[p])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn at(&self, pos: usize) -> &Instance {
        &self.instances[pos]
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.instances.iter().map(|i| i.id.as_str())
    }

    /// Keeps the instances at `positions`, in the given order.
    pub fn subset(&self, positions: &[usize]) -> Result<Self> {
        Self::new(positions.iter().map(|&p| self.instances[p].clone()).collect())
    }
}

impl<'a> IntoIterator for &'a CandidatePool {
    type Item = &'a Instance;
    type IntoIter = std::slice::Iter<'a, Instance>;

    fn into_iter(self) -> Self::IntoIter {
        self.instances.iter()
    }
}

/// Loads a JSONL pool, one `{"id", "input", "output"}` object per line.
///
/// Blank lines are skipped; line numbers in errors are 1-based and count them.
pub fn load_pool(path: impl AsRef<Path>) -> Result<CandidatePool> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut instances = Vec::new();
    let mut index = HashMap::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let inst: Instance = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message: e.to_string(),
        })?;
        inst.check().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message: e.to_string(),
        })?;
        if index.insert(inst.id.clone(), instances.len()).is_some() {
            return Err(Error::DuplicateId {
                path: path.to_path_buf(),
                line: lineno,
                id: inst.id,
            });
        }
        instances.push(inst);
    }
    Ok(CandidatePool { instances, index })
}

/// Writes instances as JSONL in pool order.
pub fn write_pool(path: impl AsRef<Path>, instances: &[Instance]) -> Result<()> {
    super::write_jsonl(path.as_ref(), instances)
}
