//! How much of each test input's substructure the chosen demonstrations contain.

use std::collections::BTreeMap;
use std::path::Path;

use iclcover::corpus::{read_selections, CandidatePool, Instance, ParseMap, Selection};
use iclcover::terms::{self, TermBag, TermScheme};
use iclcover::Error;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io;
use crate::run::{load_bundle, read_run_info, SELECTIONS_FILE};

pub const COVERAGE_FILE: &str = "coverage.json";

/// Substructure kinds audited: unigrams, n-grams up to length 4, and
/// dependency subtrees of up to 4 nodes.
pub const AUDIT_SCHEMES: [TermScheme; 3] = [
    TermScheme::Unigram,
    TermScheme::Ngram { n_max: 4 },
    TermScheme::DepSubtree { s_max: 4 },
];

/// Fraction of distinct test terms present in at least one demonstration bag.
pub fn substructure_recall(test_bag: &TermBag, demo_bags: &[TermBag]) -> Result<f64, Error> {
    if test_bag.is_empty() {
        return Err(Error::Empty("test term bag"));
    }
    for bag in demo_bags {
        if bag.scheme() != test_bag.scheme() {
            return Err(Error::SchemeMismatch(test_bag.scheme().to_string(), bag.scheme().to_string()));
        }
    }
    let covered = test_bag
        .terms()
        .filter(|t| demo_bags.iter().any(|b| b.contains(t)))
        .count();
    Ok(covered as f64 / test_bag.distinct() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceCoverage {
    pub test_id: String,
    /// Recall per scheme name; schemes without terms for this input are absent.
    pub recall: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    /// Mean recall per scheme name over the instances where it is defined.
    pub mean_recall: BTreeMap<String, f64>,
    pub instances: Vec<InstanceCoverage>,
}

fn bag_for(inst: &Instance, scheme: TermScheme, parses: Option<&ParseMap>) -> Result<Option<TermBag>, Error> {
    let parse = parses.and_then(|m| m.get(&inst.id));
    if matches!(scheme, TermScheme::DepSubtree { .. }) && parse.is_none() {
        return Ok(None);
    }
    let tokens = terms::surface_tokens(&inst.input, parse);
    terms::extract_bag(scheme, &tokens, parse).map(Some)
}

/// Recall of every audited scheme for each selection. Subtree recall needs parses.
pub fn audit(
    pool: &CandidatePool,
    tests: &[Instance],
    parses: Option<&ParseMap>,
    selections: &[Selection],
) -> Result<CoverageReport> {
    let by_id: BTreeMap<&str, &Instance> = tests.iter().map(|t| (t.id.as_str(), t)).collect();
    let mut instances = Vec::with_capacity(selections.len());
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for sel in selections {
        let test = by_id
            .get(sel.test_id.as_str())
            .ok_or_else(|| Error::UnknownId(sel.test_id.clone()))?;
        let demos = sel
            .demo_ids
            .iter()
            .map(|id| pool.get(id).ok_or_else(|| Error::UnknownId(id.clone())))
            .collect::<Result<Vec<_>, Error>>()?;
        let mut recall = BTreeMap::new();
        for scheme in AUDIT_SCHEMES {
            let Some(test_bag) = bag_for(test, scheme, parses)? else { continue };
            if test_bag.is_empty() {
                continue;
            }
            let demo_bags = demos
                .iter()
                .filter_map(|d| bag_for(d, scheme, parses).transpose())
                .collect::<Result<Vec<_>, Error>>()?;
            let r = substructure_recall(&test_bag, &demo_bags)?;
            let e = sums.entry(scheme.to_string()).or_default();
            e.0 += r;
            e.1 += 1;
            recall.insert(scheme.to_string(), r);
        }
        instances.push(InstanceCoverage {
            test_id: sel.test_id.clone(),
            recall,
        });
    }
    Ok(CoverageReport {
        mean_recall: sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect(),
        instances,
    })
}

/// Audits a finished run and writes `coverage.json` into its directory.
pub fn audit_run(run_dir: &Path) -> Result<CoverageReport> {
    let info = read_run_info(run_dir)?;
    let bundle = load_bundle(&info.config, false)?;
    let selections = read_selections(run_dir.join(SELECTIONS_FILE))?;
    let tests: Vec<Instance> = bundle.tests.into_iter().map(|(_, t)| t).collect();
    let report = audit(&bundle.pool, &tests, bundle.parses.as_ref(), &selections)?;
    io::write_json(&run_dir.join(COVERAGE_FILE), &report)?;
    Ok(report)
}

impl CoverageReport {
    pub fn load(run_dir: &Path) -> Result<Option<Self>> {
        let path = run_dir.join(COVERAGE_FILE);
        if !path.exists() {
            return Ok(None);
        }
        io::read_json(path).map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bag(words: &str) -> TermBag {
        terms::unigram_bag(&words.split_whitespace().collect::<Vec<_>>())
    }

    #[test]
    fn recall_examples() {
        let t = bag("a b c d");
        assert_eq!(substructure_recall(&t, &[bag("d c"), bag("b a x")]).unwrap(), 1.0);
        assert_eq!(substructure_recall(&t, &[bag("x y")]).unwrap(), 0.0);
        assert_eq!(substructure_recall(&t, &[bag("a"), bag("c")]).unwrap(), 0.5);
        assert_eq!(substructure_recall(&t, &[]).unwrap(), 0.0);
        assert!(substructure_recall(&bag(""), &[bag("a")]).is_err());
        let ng = terms::ngram_bag(&["a"], 2).unwrap();
        assert!(substructure_recall(&t, &[ng]).is_err());
    }

    #[test]
    fn audit_averages_over_instances() {
        let pool = CandidatePool::new(vec![
            Instance::new("d1", "a b", "x"),
            Instance::new("d2", "c", "y"),
        ])
        .unwrap();
        let tests = vec![Instance::new("t1", "a b c d", "o"), Instance::new("t2", "c", "o")];
        let sel = |t: &str, ids: &[&str]| Selection {
            test_id: t.into(),
            demo_ids: ids.iter().map(|s| s.to_string()).collect(),
            instance_scores: vec![0.0; ids.len()],
            set_score: None,
            metric_name: "bm25:unigram".into(),
            seed: None,
        };
        let r = audit(&pool, &tests, None, &[sel("t1", &["d1", "d2"]), sel("t2", &["d1"])]).unwrap();
        assert_eq!(r.instances[0].recall["unigram"], 0.75);
        assert_eq!(r.instances[1].recall["unigram"], 0.0);
        assert_eq!(r.mean_recall["unigram"], 0.375);
        assert!(!r.mean_recall.contains_key("depst4"));
    }
}
