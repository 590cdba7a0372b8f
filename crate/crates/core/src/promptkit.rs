//! Demonstration ordering, context budgeting and prompt rendering.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{CandidatePool, Instance, Selection};
use crate::error::{Error, Result};

pub const INPUT_PLACEHOLDER: &str = "{input}";
pub const OUTPUT_PLACEHOLDER: &str = "{output}";
pub const DEFAULT_SEPARATOR: &str = "\n\n";

fn default_separator() -> String {
    DEFAULT_SEPARATOR.to_string()
}

/// Linearization of one instance: an input line, then an output line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplate {
    pub input_pattern: String,
    pub output_pattern: String,
    #[serde(default = "default_separator")]
    pub separator: String,
}

/// Replaces the single occurrence of `placeholder`, leaving braces in `value` alone.
fn fill(pattern: &str, placeholder: &str, value: &str) -> String {
    match pattern.split_once(placeholder) {
        Some((head, tail)) => format!("{head}{value}{tail}"),
        None => pattern.to_string(),
    }
}

impl PromptTemplate {
    pub fn new(input_pattern: impl Into<String>, output_pattern: impl Into<String>) -> Result<Self> {
        let t = Self {
            input_pattern: input_pattern.into(),
            output_pattern: output_pattern.into(),
            separator: default_separator(),
        };
        t.validate()?;
        Ok(t)
    }

    /// `Sentence: {input}` / `Logical Form: {output}`.
    pub fn logical_form() -> Self {
        Self::new("Sentence: {input}", "Logical Form: {output}").expect("valid built-in template")
    }

    pub fn with_separator(mut self, separator: impl Into<String>) -> Result<Self> {
        self.separator = separator.into();
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for (pattern, placeholder) in [
            (&self.input_pattern, INPUT_PLACEHOLDER),
            (&self.output_pattern, OUTPUT_PLACEHOLDER),
        ] {
            let n = pattern.matches(placeholder).count();
            if n != 1 {
                return Err(Error::InvalidParameter(format!(
                    "template pattern {pattern:?} must contain {placeholder} exactly once, found {n}"
                )));
            }
        }
        if self.separator.is_empty() {
            return Err(Error::InvalidParameter("template separator is empty".into()));
        }
        Ok(())
    }

    pub fn render_demo(&self, input: &str, output: &str) -> String {
        format!(
            "{}\n{}",
            fill(&self.input_pattern, INPUT_PLACEHOLDER, input),
            fill(&self.output_pattern, OUTPUT_PLACEHOLDER, output)
        )
    }

    /// The test block: filled input line, then the output prefix with trailing whitespace trimmed.
    pub fn render_cue(&self, input: &str) -> String {
        let prefix = self
            .output_pattern
            .split_once(OUTPUT_PLACEHOLDER)
            .map_or(self.output_pattern.as_str(), |(head, _)| head);
        format!(
            "{}\n{}",
            fill(&self.input_pattern, INPUT_PLACEHOLDER, input),
            prefix.trim_end()
        )
    }
}

/// Reads `templates.json`: `{dataset: {input_pattern, output_pattern, separator}}`.
pub fn load_templates(path: impl AsRef<Path>) -> Result<BTreeMap<String, PromptTemplate>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let map: BTreeMap<String, PromptTemplate> = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    for (name, t) in &map {
        t.validate()
            .map_err(|e| Error::InvalidParameter(format!("template {name:?}: {e}")))?;
    }
    Ok(map)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingMode {
    /// Ascending instance score, so the most relevant demo sits next to the test input.
    #[default]
    ByInstanceScore,
    /// Reverse selection order: the first-selected demo comes last.
    SelectionOrder,
}

impl fmt::Display for OrderingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OrderingMode::ByInstanceScore => "by_instance_score",
            OrderingMode::SelectionOrder => "selection_order",
        })
    }
}

impl FromStr for OrderingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "by_instance_score" => Ok(OrderingMode::ByInstanceScore),
            "selection_order" => Ok(OrderingMode::SelectionOrder),
            other => Err(Error::InvalidParameter(format!("unknown ordering mode {other:?}"))),
        }
    }
}

/// Demo ids in prompt order.
///
/// Equal scores keep the earlier-selected demo closer to the test input.
pub fn order_for_prompt(selection: &Selection, mode: OrderingMode) -> Result<Vec<String>> {
    match mode {
        OrderingMode::SelectionOrder => Ok(selection.demo_ids.iter().rev().cloned().collect()),
        OrderingMode::ByInstanceScore => {
            let scores = &selection.instance_scores;
            if scores.len() != selection.demo_ids.len() || scores.iter().any(|s| s.is_nan()) {
                return Err(Error::InvalidParameter(format!(
                    "selection for {:?} lacks instance scores for every demo",
                    selection.test_id
                )));
            }
            let mut idx: Vec<usize> = (0..scores.len()).collect();
            idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(b.cmp(&a)));
            Ok(idx.into_iter().map(|i| selection.demo_ids[i].clone()).collect())
        }
    }
}

/// Measures prompt length in model-specific units.
pub trait UnitCounter: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

#[derive(Clone, Default)]
pub enum Counter {
    #[default]
    WhitespaceTokens,
    Characters,
    Pluggable(Arc<dyn UnitCounter>),
}

impl Counter {
    pub fn count(&self, text: &str) -> usize {
        match self {
            Counter::WhitespaceTokens => text.split_whitespace().count(),
            Counter::Characters => text.chars().count(),
            Counter::Pluggable(c) => c.count(text),
        }
    }
}

impl fmt::Debug for Counter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Counter::WhitespaceTokens => "WhitespaceTokens",
            Counter::Characters => "Characters",
            Counter::Pluggable(_) => "Pluggable",
        })
    }
}

impl FromStr for Counter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "whitespace_tokens" => Ok(Counter::WhitespaceTokens),
            "characters" => Ok(Counter::Characters),
            other => Err(Error::InvalidParameter(format!(
                "unknown budget counter {other:?}; pluggable counters are set in code"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BudgetPolicy {
    max_units: usize,
    counter: Counter,
}

impl BudgetPolicy {
    pub fn new(max_units: usize, counter: Counter) -> Result<Self> {
        if max_units == 0 {
            return Err(Error::InvalidParameter("budget max_units must be positive".into()));
        }
        Ok(Self { max_units, counter })
    }

    pub fn max_units(&self) -> usize {
        self.max_units
    }

    pub fn counter(&self) -> &Counter {
        &self.counter
    }

    pub fn fits(&self, text: &str) -> bool {
        self.counter.count(text) <= self.max_units
    }
}

fn lookup<'p>(pool: &'p CandidatePool, ids: &[String]) -> Result<Vec<&'p Instance>> {
    ids.iter()
        .map(|id| pool.get(id).ok_or_else(|| Error::UnknownId(id.clone())))
        .collect()
}

/// Concatenates the demonstration blocks and the test cue.
pub fn render_prompt(demos: &[&Instance], template: &PromptTemplate, test_input: &str) -> Result<String> {
    let sep = &template.separator;
    let mut blocks = Vec::with_capacity(demos.len() + 1);
    for demo in demos {
        if demo.output.is_empty() {
            return Err(Error::Prompt(format!("demonstration {:?} has an empty output", demo.id)));
        }
        let block = template.render_demo(&demo.input, &demo.output);
        if block.contains(sep.as_str()) {
            return Err(Error::Prompt(format!(
                "demonstration {:?} contains the separator {sep:?}",
                demo.id
            )));
        }
        blocks.push(block);
    }
    let cue = template.render_cue(test_input);
    if cue.contains(sep.as_str()) {
        return Err(Error::Prompt(format!("test input contains the separator {sep:?}")));
    }
    blocks.push(cue);
    Ok(blocks.join(sep))
}

/// [`render_prompt`] over pool ids.
pub fn render_ids(ids: &[String], pool: &CandidatePool, template: &PromptTemplate, test_input: &str) -> Result<String> {
    render_prompt(&lookup(pool, ids)?, template, test_input)
}

/// Drops demos from the front of `ordered` until the prompt fits the budget.
pub fn fit_budget(
    ordered: &[String],
    pool: &CandidatePool,
    template: &PromptTemplate,
    test_input: &str,
    policy: &BudgetPolicy,
) -> Result<Vec<String>> {
    let demos = lookup(pool, ordered)?;
    let cue = render_prompt(&[], template, test_input)?;
    if !policy.fits(&cue) {
        return Err(Error::Prompt(format!(
            "test input alone needs {} units, budget is {}",
            policy.counter.count(&cue),
            policy.max_units
        )));
    }
    for start in 0..demos.len() {
        if policy.fits(&render_prompt(&demos[start..], template, test_input)?) {
            return Ok(ordered[start..].to_vec());
        }
    }
    Ok(Vec::new())
}
