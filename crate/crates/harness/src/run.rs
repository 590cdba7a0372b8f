//! End-to-end selection over a test split.

use std::fs;
use std::path::Path;
use std::time::Instant;

use iclcover::corpus::{
    load_parses, load_pool, validate_ids, CandidatePool, EmbeddingStore, Instance, ParseMap, Selection,
};
use iclcover::promptkit::{self, BudgetPolicy, PromptTemplate};
use iclcover::relevance::{MetricConfig, MetricKind, Resources, Scorer};
use iclcover::setcover::{self, DecomposeOptions};
use iclcover::terms::TermScheme;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SelectorKind};
use crate::error::{HarnessError, Result};
use crate::eval::PromptRecord;
use crate::io;
use crate::random::random_select;

pub const SELECTIONS_FILE: &str = "selections.jsonl";
pub const PROMPTS_FILE: &str = "prompts.jsonl";
pub const RUN_FILE: &str = "run.json";

/// Summary written to `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub method: String,
    pub config: ExperimentConfig,
    pub n_tests: usize,
    /// Mean set coverage of the selected demonstrations, when the metric decomposes.
    pub setcov_mean: Option<f64>,
    pub elapsed_secs: f64,
}

/// Loaded inputs of an experiment.
#[derive(Debug)]
pub struct Bundle {
    pub pool: CandidatePool,
    /// Test instances with their line index in the test file.
    pub tests: Vec<(usize, Instance)>,
    pub store: Option<EmbeddingStore>,
    pub parses: Option<ParseMap>,
}

impl Bundle {
    pub fn resources(&self) -> Resources<'_> {
        Resources {
            store: self.store.as_ref(),
            parses: self.parses.as_ref(),
        }
    }
}

/// Loads pool, tests and side resources, subsamples tests if configured and
/// cross-checks ids.
pub fn load_bundle(config: &ExperimentConfig, with_embeddings: bool) -> Result<Bundle> {
    let pool = load_pool(&config.pool_path)?;
    let test_pool = load_pool(&config.test_path)?;
    let mut tests: Vec<(usize, Instance)> = test_pool.instances().iter().cloned().enumerate().collect();
    if let Some(max) = config.max_test_instances {
        if max < tests.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let mut keep = rand::seq::index::sample(&mut rng, tests.len(), max).into_vec();
            keep.sort_unstable();
            tests = keep.into_iter().map(|i| tests[i].clone()).collect();
        }
    }
    let store = match (&config.embeddings_dir, with_embeddings) {
        (Some(dir), true) => Some(EmbeddingStore::load(dir)?),
        _ => None,
    };
    let parses = config.parses_path.as_ref().map(load_parses).transpose()?;

    let ids = pool.ids().chain(tests.iter().map(|(_, t)| t.id.as_str()));
    let mut report = validate_ids(ids, store.as_ref(), parses.as_ref());
    if !report.orphaned_embeddings.is_empty() || !report.orphaned_parses.is_empty() {
        log::warn!(
            "ignoring {} embedding and {} parse records not in the pool or test split",
            report.orphaned_embeddings.len(),
            report.orphaned_parses.len()
        );
    }
    report.orphaned_embeddings.clear();
    report.orphaned_parses.clear();
    if !report.is_empty() {
        return Err(HarnessError::Validation(report));
    }
    Ok(Bundle {
        pool,
        tests,
        store,
        parses,
    })
}

fn pick_template(config: &ExperimentConfig) -> Result<PromptTemplate> {
    let Some(path) = &config.templates_path else {
        return Ok(PromptTemplate::logical_form());
    };
    let mut templates = promptkit::load_templates(path)?;
    match &config.template {
        Some(name) => templates
            .remove(name)
            .ok_or_else(|| HarnessError::Config(format!("no template named {name:?} in {}", path.display()))),
        None if templates.len() == 1 => Ok(templates.into_values().next().expect("one template")),
        None => Err(HarnessError::Config(format!(
            "{} defines {} templates; choose one with `template`",
            path.display(),
            templates.len()
        ))),
    }
}

/// Metric used to score demonstrations. Random selection falls back to
/// unigram BM25 when the configured metric's resources are absent.
fn scoring_metric(config: &ExperimentConfig, bundle: &Bundle) -> MetricConfig {
    let kind = config.metric.kind;
    let available = (!kind.needs_embeddings() || bundle.store.is_some())
        && (!kind.needs_parses() || bundle.parses.is_some());
    if config.selector == SelectorKind::Random && !available {
        log::info!("scoring random demonstrations with unigram bm25; {kind} inputs are not loaded");
        return MetricConfig::new(MetricKind::Bm25(TermScheme::Unigram));
    }
    config.metric.clone()
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    scorer: Scorer<'a>,
    template: PromptTemplate,
    budget: Option<BudgetPolicy>,
    decompose: DecomposeOptions,
}

impl Context<'_> {
    fn set_score(&self, test: &Instance, ids: &[String]) -> Result<Option<f64>> {
        if !self.scorer.config().kind.is_decomposable() || ids.is_empty() {
            return Ok(None);
        }
        let d = setcover::decompose_with(&self.scorer, test, self.decompose)?;
        let ids: Vec<&str> = ids.iter().map(String::as_str).collect();
        Ok(Some(setcover::setcov(&d, &ids)?))
    }

    fn select(&self, line: usize, test: &Instance) -> Result<Selection> {
        let k = self.config.k;
        let metric_name = self.scorer.config().kind.to_string();
        match self.config.selector {
            SelectorKind::SetGreedy => Ok(setcover::select_set(&self.scorer, test, k, self.decompose)?.selection),
            SelectorKind::Independent => {
                let top = self.scorer.rank_independent(test, k)?;
                let demo_ids: Vec<String> = top.iter().map(|c| c.id.clone()).collect();
                Ok(Selection {
                    test_id: test.id.clone(),
                    set_score: self.set_score(test, &demo_ids)?,
                    instance_scores: top.iter().map(|c| c.score).collect(),
                    demo_ids,
                    metric_name,
                    seed: None,
                })
            }
            SelectorKind::Random => {
                let pool = self.scorer.pool();
                let positions = self.scorer.candidates(test);
                let ids: Vec<String> = positions.iter().map(|&p| pool.at(p).id.clone()).collect();
                let demo_ids = random_select(&ids, k, self.config.seed, line as u64)?;
                let query = self.scorer.query(test)?;
                let instance_scores = demo_ids
                    .iter()
                    .map(|id| self.scorer.score(&query, pool.position(id).expect("drawn from pool")))
                    .collect::<iclcover::Result<Vec<f64>>>()?;
                Ok(Selection {
                    test_id: test.id.clone(),
                    set_score: self.set_score(test, &demo_ids)?,
                    instance_scores,
                    demo_ids,
                    metric_name,
                    seed: Some(self.config.seed),
                })
            }
        }
    }

    fn prompt(&self, selection: &Selection, test: &Instance) -> Result<PromptRecord> {
        let pool = self.scorer.pool();
        let mut ordered = promptkit::order_for_prompt(selection, self.config.ordering)?;
        if let Some(policy) = &self.budget {
            ordered = promptkit::fit_budget(&ordered, pool, &self.template, &test.input, policy)?;
        }
        Ok(PromptRecord {
            test_id: test.id.clone(),
            prompt: promptkit::render_ids(&ordered, pool, &self.template, &test.input)?,
            reference: test.output.clone(),
        })
    }
}

/// Selects demonstrations and renders a prompt for every test instance, in test order.
pub fn select_all(config: &ExperimentConfig, bundle: &Bundle) -> Result<(Vec<Selection>, Vec<PromptRecord>)> {
    let ctx = Context {
        config,
        scorer: Scorer::new(scoring_metric(config, bundle), &bundle.pool, bundle.resources())?,
        template: pick_template(config)?,
        budget: config.budget.map(|b| b.policy()).transpose()?,
        decompose: DecomposeOptions {
            memory_cap_bytes: config
                .memory_cap_bytes
                .unwrap_or(setcover::DEFAULT_MEMORY_CAP_BYTES),
        },
    };
    let work = || -> Result<Vec<(Selection, PromptRecord)>> {
        bundle
            .tests
            .par_iter()
            .map(|(line, test)| {
                let sel = ctx.select(*line, test)?;
                let prompt = ctx.prompt(&sel, test)?;
                Ok((sel, prompt))
            })
            .collect()
    };
    let results = match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| HarnessError::Config(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    Ok(results.into_iter().unzip())
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Runs a configured experiment and writes `selections.jsonl`, `prompts.jsonl`
/// and `run.json` into the output directory. Nothing is left behind on failure.
pub fn run_selection(config: &ExperimentConfig) -> Result<RunInfo> {
    config.validate()?;
    let start = Instant::now();
    let bundle = load_bundle(config, true)?;
    let (selections, prompts) = select_all(config, &bundle)?;
    let info = RunInfo {
        method: config.method_label(),
        config: config.clone(),
        n_tests: selections.len(),
        setcov_mean: mean(selections.iter().filter_map(|s| s.set_score)),
        elapsed_secs: start.elapsed().as_secs_f64(),
    };
    write_outputs(&config.output_dir, &selections, &prompts, &info)?;
    log::info!(
        "{}: {} selections in {:.2}s -> {}",
        info.method,
        info.n_tests,
        info.elapsed_secs,
        config.output_dir.display()
    );
    Ok(info)
}

fn write_outputs(dir: &Path, selections: &[Selection], prompts: &[PromptRecord], info: &RunInfo) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let staged = [
        io::stage_jsonl(&dir.join(SELECTIONS_FILE), selections)?,
        io::stage_jsonl(&dir.join(PROMPTS_FILE), prompts)?,
        io::stage_json(&dir.join(RUN_FILE), info)?,
    ];
    for s in staged {
        s.commit()?;
    }
    Ok(())
}

pub fn read_run_info(run_dir: &Path) -> Result<RunInfo> {
    io::read_json(run_dir.join(RUN_FILE))
}
