//! Exact-match scoring of model predictions.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::io;

pub const EVAL_FILE: &str = "eval.json";

/// One rendered prompt, as written to `prompts.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub test_id: String,
    pub prompt: String,
    pub reference: String,
}

/// One model output, as read from `predictions.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub test_id: String,
    pub prediction: String,
}

/// Trims and collapses internal whitespace runs to single spaces.
pub fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn exact_match(prediction: &str, reference: &str) -> bool {
    normalize(prediction) == normalize(reference)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub test_id: String,
    pub prediction: String,
    pub reference: String,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub n: usize,
    pub correct: usize,
    pub exact_match: f64,
    pub records: Vec<EvalRecord>,
}

/// Scores predictions against prompt references, in prompt order.
pub fn evaluate(prompts: &[PromptRecord], predictions: &[Prediction]) -> Result<EvalSummary> {
    let mut by_id: HashMap<&str, &str> = HashMap::new();
    for p in predictions {
        if by_id.insert(&p.test_id, &p.prediction).is_some() {
            return Err(HarnessError::Config(format!("two predictions for {:?}", p.test_id)));
        }
    }
    let mut records = Vec::with_capacity(prompts.len());
    for p in prompts {
        let prediction = by_id
            .remove(p.test_id.as_str())
            .ok_or_else(|| iclcover::Error::MissingResource {
                what: "prediction",
                id: p.test_id.clone(),
            })?;
        records.push(EvalRecord {
            test_id: p.test_id.clone(),
            prediction: prediction.to_string(),
            reference: p.reference.clone(),
            correct: exact_match(prediction, &p.reference),
        });
    }
    if let Some(extra) = by_id.keys().min() {
        return Err(iclcover::Error::UnknownId(extra.to_string()).into());
    }
    let correct = records.iter().filter(|r| r.correct).count();
    let n = records.len();
    Ok(EvalSummary {
        n,
        correct,
        exact_match: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
        records,
    })
}

/// Evaluates a run directory's prompts and writes `eval.json` next to them.
pub fn evaluate_run(run_dir: &Path, predictions_path: &Path) -> Result<EvalSummary> {
    let prompts: Vec<PromptRecord> = io::read_jsonl(run_dir.join(crate::run::PROMPTS_FILE))?;
    let predictions: Vec<Prediction> = io::read_jsonl(predictions_path)?;
    let summary = evaluate(&prompts, &predictions)?;
    io::write_json(&run_dir.join(EVAL_FILE), &summary)?;
    Ok(summary)
}
