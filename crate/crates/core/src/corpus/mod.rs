//! Data model and file formats: pools, embedding containers, parses and
//! selections.

mod embeddings;
mod parse;
mod pool;
mod selection;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

pub use embeddings::{
    write_embeddings, EmbeddingRecord, EmbeddingStore, LoadOptions, Manifest, ManifestRecord,
    NormCheck, TokenMatrix, FORMAT_VERSION, MANIFEST_FILE, NORM_EXPECTED_TOLERANCE,
    NORM_HARD_TOLERANCE, SENTENCE_FILE, TOKENS_FILE,
};
pub use parse::{load_parses, write_parses, ParseMap, ParseRecord};
pub use pool::{load_pool, write_pool, CandidatePool, Instance};
pub use selection::{read_selections, write_selections, Selection};

use crate::error::{Error, Result};

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Ids that disagree between a pool and its side resources.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub missing_embeddings: Vec<String>,
    pub orphaned_embeddings: Vec<String>,
    pub missing_parses: Vec<String>,
    pub orphaned_parses: Vec<String>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.missing_embeddings.is_empty()
            && self.orphaned_embeddings.is_empty()
            && self.missing_parses.is_empty()
            && self.orphaned_parses.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let groups = [
            ("missing-embeddings", &self.missing_embeddings),
            ("orphaned-embeddings", &self.orphaned_embeddings),
            ("missing-parses", &self.missing_parses),
            ("orphaned-parses", &self.orphaned_parses),
        ];
        for (name, ids) in groups {
            if !ids.is_empty() {
                writeln!(f, "{name} ({}): {}", ids.len(), ids.join(", "))?;
            }
        }
        Ok(())
    }
}

/// Cross-checks pool ids against an embedding store and a parse map.
///
/// Absent resources are not checked. Missing ids are listed in pool order,
/// orphaned ids in sorted order.
pub fn validate_bundle(
    pool: &CandidatePool,
    store: Option<&EmbeddingStore>,
    parses: Option<&ParseMap>,
) -> ValidationReport {
    validate_ids(pool.ids(), store, parses)
}

/// Like [`validate_bundle`] over an arbitrary id list, e.g. pool and test split together.
pub fn validate_ids<'a>(
    ids: impl IntoIterator<Item = &'a str>,
    store: Option<&EmbeddingStore>,
    parses: Option<&ParseMap>,
) -> ValidationReport {
    let mut seen = HashSet::new();
    let ids: Vec<&str> = ids.into_iter().filter(|id| seen.insert(*id)).collect();
    let mut report = ValidationReport::default();
    if let Some(store) = store {
        report.missing_embeddings = ids
            .iter()
            .filter(|id| !store.contains(id))
            .map(|s| s.to_string())
            .collect();
        report.orphaned_embeddings = store
            .ids()
            .filter(|id| !seen.contains(id))
            .map(str::to_string)
            .collect();
        report.orphaned_embeddings.sort();
    }
    if let Some(parses) = parses {
        report.missing_parses = ids
            .iter()
            .filter(|id| !parses.contains_key(**id))
            .map(|s| s.to_string())
            .collect();
        report.orphaned_parses = parses
            .keys()
            .filter(|id| !seen.contains(id.as_str()))
            .cloned()
            .collect();
        report.orphaned_parses.sort();
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(ids: &[&str]) -> EmbeddingStore {
        let recs: Vec<_> = ids
            .iter()
            .map(|id| EmbeddingRecord {
                id: id.to_string(),
                sentence: vec![1.0, 0.0],
                tokens: vec!["x".into()],
                token_vectors: vec![0.0, 1.0],
            })
            .collect();
        EmbeddingStore::from_records(2, 2, &recs).unwrap()
    }

    fn parses(ids: &[&str]) -> ParseMap {
        ids.iter()
            .map(|id| {
                (
                    id.to_string(),
                    ParseRecord {
                        id: id.to_string(),
                        tokens: vec!["x".into()],
                        lemmas: vec!["x".into()],
                        heads: vec![-1],
                        dep_labels: vec!["ROOT".into()],
                    },
                )
            })
            .collect()
    }

    fn pool(ids: &[&str]) -> CandidatePool {
        CandidatePool::new(ids.iter().map(|id| Instance::new(*id, "in", "out")).collect()).unwrap()
    }

    #[test]
    fn consistent_bundle_has_empty_report() {
        let p = pool(&["q1", "q2"]);
        let r = validate_bundle(&p, Some(&store(&["q2", "q1"])), Some(&parses(&["q1", "q2"])));
        assert!(r.is_empty(), "{r}");
    }

    #[test]
    fn missing_embedding_is_reported() {
        let p = pool(&["q1", "q7"]);
        let r = validate_bundle(&p, Some(&store(&["q1"])), None);
        assert_eq!(r.missing_embeddings, vec!["q7"]);
        assert!(r.orphaned_embeddings.is_empty());
    }

    #[test]
    fn extra_embedding_is_orphaned() {
        let p = pool(&["q1"]);
        let r = validate_bundle(&p, Some(&store(&["q1", "zz"])), Some(&parses(&["q1", "pp"])));
        assert_eq!(r.orphaned_embeddings, vec!["zz"]);
        assert_eq!(r.orphaned_parses, vec!["pp"]);
        assert!(r.to_string().contains("orphaned-embeddings (1): zz"));
    }
}
