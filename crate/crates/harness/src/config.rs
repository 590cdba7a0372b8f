use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use iclcover::promptkit::{BudgetPolicy, Counter, OrderingMode};
use iclcover::relevance::{CandidateText, MetricConfig, MetricKind};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const DEFAULT_K: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorKind {
    /// Top-k by instance score.
    Independent,
    /// Greedy set-coverage selection.
    #[default]
    SetGreedy,
    Random,
}

impl fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectorKind::Independent => "independent",
            SelectorKind::SetGreedy => "set_greedy",
            SelectorKind::Random => "random",
        })
    }
}

impl FromStr for SelectorKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(SelectorKind::Independent),
            "set_greedy" | "set" => Ok(SelectorKind::SetGreedy),
            "random" => Ok(SelectorKind::Random),
            other => Err(HarnessError::Config(format!("unknown selector {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CounterKind {
    #[default]
    WhitespaceTokens,
    Characters,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    pub max_units: usize,
    #[serde(default)]
    pub counter: CounterKind,
}

impl BudgetConfig {
    pub fn policy(&self) -> Result<BudgetPolicy> {
        let counter = match self.counter {
            CounterKind::WhitespaceTokens => Counter::WhitespaceTokens,
            CounterKind::Characters => Counter::Characters,
        };
        Ok(BudgetPolicy::new(self.max_units, counter)?)
    }
}

fn default_k() -> usize {
    DEFAULT_K
}

fn default_metric() -> MetricConfig {
    MetricConfig::new(MetricKind::Bsr)
}

/// One selection experiment: data, metric, selector and prompt settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub pool_path: PathBuf,
    pub test_path: PathBuf,
    #[serde(default)]
    pub embeddings_dir: Option<PathBuf>,
    #[serde(default)]
    pub parses_path: Option<PathBuf>,
    #[serde(default)]
    pub templates_path: Option<PathBuf>,
    /// Dataset key in the templates file.
    #[serde(default)]
    pub template: Option<String>,
    #[serde(default = "default_metric")]
    pub metric: MetricConfig,
    #[serde(default)]
    pub selector: SelectorKind,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ordering: OrderingMode,
    #[serde(default)]
    pub budget: Option<BudgetConfig>,
    pub output_dir: PathBuf,
    /// Evaluate on a seeded sample of at most this many test instances.
    #[serde(default)]
    pub max_test_instances: Option<usize>,
    #[serde(default)]
    pub memory_cap_bytes: Option<usize>,
    #[serde(default)]
    pub threads: Option<usize>,
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub pool_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub embeddings_dir: Option<PathBuf>,
    pub parses_path: Option<PathBuf>,
    pub templates_path: Option<PathBuf>,
    pub template: Option<String>,
    pub output_dir: Option<PathBuf>,
    pub metric: Option<MetricKind>,
    pub idf_weights: Option<bool>,
    pub candidate_text: Option<CandidateText>,
    pub selector: Option<SelectorKind>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub ordering: Option<OrderingMode>,
    pub budget: Option<usize>,
    pub budget_counter: Option<CounterKind>,
    pub max_test_instances: Option<usize>,
    pub threads: Option<usize>,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if !p.as_os_str().is_empty() && p.is_relative() {
        *p = base.join(&*p);
    }
}

impl ExperimentConfig {
    pub fn new(pool_path: impl Into<PathBuf>, test_path: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            pool_path: pool_path.into(),
            test_path: test_path.into(),
            embeddings_dir: None,
            parses_path: None,
            templates_path: None,
            template: None,
            metric: default_metric(),
            selector: SelectorKind::default(),
            k: DEFAULT_K,
            seed: 0,
            ordering: OrderingMode::default(),
            budget: None,
            output_dir: output_dir.into(),
            max_test_instances: None,
            memory_cap_bytes: None,
            threads: None,
        }
    }

    /// Reads a `.toml` or `.json` config; relative paths are taken from the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| HarnessError::ConfigFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let bad = |message: String| HarnessError::ConfigFile {
            path: path.to_path_buf(),
            message,
        };
        let mut cfg: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).map_err(|e| bad(e.to_string()))?,
            Some("json") => serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?,
            _ => return Err(bad("expected a .toml or .json file".into())),
        };
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.pool_path, &mut cfg.test_path, &mut cfg.output_dir] {
            resolve(base, p);
        }
        for p in [&mut cfg.embeddings_dir, &mut cfg.parses_path, &mut cfg.templates_path]
            .into_iter()
            .flatten()
        {
            resolve(base, p);
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: Overrides) {
        fn set<T>(slot: &mut T, v: Option<T>) {
            if let Some(v) = v {
                *slot = v;
            }
        }
        set(&mut self.pool_path, o.pool_path);
        set(&mut self.test_path, o.test_path);
        set(&mut self.output_dir, o.output_dir);
        if o.embeddings_dir.is_some() {
            self.embeddings_dir = o.embeddings_dir;
        }
        if o.parses_path.is_some() {
            self.parses_path = o.parses_path;
        }
        if o.templates_path.is_some() {
            self.templates_path = o.templates_path;
        }
        if o.template.is_some() {
            self.template = o.template;
        }
        set(&mut self.metric.kind, o.metric);
        set(&mut self.metric.use_idf_weights, o.idf_weights);
        set(&mut self.metric.candidate_text, o.candidate_text);
        set(&mut self.selector, o.selector);
        set(&mut self.k, o.k);
        set(&mut self.seed, o.seed);
        set(&mut self.ordering, o.ordering);
        if let Some(max_units) = o.budget {
            let counter = o
                .budget_counter
                .or(self.budget.map(|b| b.counter))
                .unwrap_or_default();
            self.budget = Some(BudgetConfig { max_units, counter });
        } else if let (Some(b), Some(c)) = (self.budget.as_mut(), o.budget_counter) {
            b.counter = c;
        }
        if o.max_test_instances.is_some() {
            self.max_test_instances = o.max_test_instances;
        }
        if o.threads.is_some() {
            self.threads = o.threads;
        }
    }

    /// Checks values and that every referenced input exists.
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(HarnessError::Config(m));
        if self.k < 1 {
            return err("k must be at least 1".into());
        }
        self.metric.validate()?;
        if let Some(b) = self.budget {
            b.policy()?;
        }
        if self.threads == Some(0) {
            return err("threads must be positive".into());
        }
        if self.max_test_instances == Some(0) {
            return err("max_test_instances must be positive".into());
        }
        let kind = self.metric.kind;
        let uses_metric = self.selector != SelectorKind::Random;
        if uses_metric && kind.needs_embeddings() && self.embeddings_dir.is_none() {
            return err(format!("metric {kind} needs embeddings_dir"));
        }
        if uses_metric && kind.needs_parses() && self.parses_path.is_none() {
            return err(format!("metric {kind} needs parses_path"));
        }
        if self.selector == SelectorKind::SetGreedy && !kind.is_decomposable() {
            return Err(iclcover::Error::UnsupportedMetric(kind.to_string()).into());
        }
        if self.template.is_some() && self.templates_path.is_none() {
            return err("template is set but templates_path is not".into());
        }
        if self.output_dir.as_os_str().is_empty() {
            return err("output_dir is not set".into());
        }
        let required = [("pool_path", Some(&self.pool_path)), ("test_path", Some(&self.test_path))];
        let optional = [
            ("embeddings_dir", self.embeddings_dir.as_ref()),
            ("parses_path", self.parses_path.as_ref()),
            ("templates_path", self.templates_path.as_ref()),
        ];
        for (name, path) in required.into_iter().chain(optional) {
            match path {
                Some(p) if p.as_os_str().is_empty() => return err(format!("{name} is not set")),
                Some(p) if !p.exists() => return err(format!("{name} {} does not exist", p.display())),
                _ => {}
            }
        }
        Ok(())
    }

    /// Short method name, e.g. `Set-BM25[ngram4]`.
    pub fn method_label(&self) -> String {
        match self.selector {
            SelectorKind::Random => "Random".into(),
            SelectorKind::Independent => self.metric.kind.label(),
            SelectorKind::SetGreedy => format!("Set-{}", self.metric.kind.label()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use iclcover::terms::TermScheme;

    fn touch(dir: &Path, names: &[&str]) {
        for n in names {
            fs::write(dir.join(n), "").unwrap();
        }
    }

    #[test]
    fn toml_config_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), &["pool.jsonl", "test.jsonl"]);
        let path = dir.path().join("exp.toml");
        fs::write(
            &path,
            r#"
pool_path = "pool.jsonl"
test_path = "test.jsonl"
output_dir = "out"
selector = "independent"
k = 4

[metric]
kind = "bm25:ngram4"
bm25_k1 = 1.2
"#,
        )
        .unwrap();
        let cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg.pool_path, dir.path().join("pool.jsonl"));
        assert_eq!(cfg.metric.kind, MetricKind::Bm25(TermScheme::Ngram { n_max: 4 }));
        assert_eq!(cfg.metric.bm25_b, 0.75);
        assert_eq!(cfg.k, 4);
        assert_eq!(cfg.method_label(), "BM25[ngram4]");
        cfg.validate().unwrap();
    }

    #[test]
    fn json_config_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.json");
        fs::write(&path, r#"{"pool_path": "p", "test_path": "t", "output_dir": "o"}"#).unwrap();
        let cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg.k, DEFAULT_K);
        assert_eq!(cfg.selector, SelectorKind::SetGreedy);
        assert_eq!(cfg.metric.kind, MetricKind::Bsr);
    }

    #[test]
    fn unknown_keys_and_extensions_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.json");
        fs::write(&path, r#"{"pool_path": "p", "test_path": "t", "output_dir": "o", "kk": 3}"#).unwrap();
        assert_eq!(ExperimentConfig::load(&path).unwrap_err().exit_code(), 2);
        let path = dir.path().join("exp.yaml");
        fs::write(&path, "").unwrap();
        assert_eq!(ExperimentConfig::load(&path).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn overrides_take_precedence() {
        let mut cfg = ExperimentConfig::new("p", "t", "o");
        cfg.apply(Overrides {
            metric: Some(MetricKind::Cosine),
            selector: Some(SelectorKind::Random),
            k: Some(3),
            seed: Some(11),
            budget: Some(500),
            ..Default::default()
        });
        assert_eq!(cfg.metric.kind, MetricKind::Cosine);
        assert_eq!(cfg.k, 3);
        assert_eq!(cfg.seed, 11);
        assert_eq!(
            cfg.budget,
            Some(BudgetConfig {
                max_units: 500,
                counter: CounterKind::WhitespaceTokens
            })
        );
        assert_eq!(cfg.method_label(), "Random");
    }

    #[test]
    fn validation_errors_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), &["pool.jsonl", "test.jsonl"]);
        let base = ExperimentConfig::new(dir.path().join("pool.jsonl"), dir.path().join("test.jsonl"), dir.path().join("o"));

        let mut c = base.clone();
        c.k = 0;
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);

        // bsr without embeddings
        assert_eq!(base.validate().unwrap_err().exit_code(), 2);

        let mut c = base.clone();
        c.metric = MetricConfig::new(MetricKind::Bsp);
        c.embeddings_dir = Some(dir.path().to_path_buf());
        let e = c.validate().unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("bsr"), "{e}");
        c.selector = SelectorKind::Independent;
        c.validate().unwrap();

        let mut c = base.clone();
        c.metric = MetricConfig::new(MetricKind::Bm25(TermScheme::Unigram));
        c.pool_path = dir.path().join("missing.jsonl");
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
    }
}
