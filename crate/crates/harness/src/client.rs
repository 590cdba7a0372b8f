//! Minimal client for OpenAI-style completion endpoints.

use std::path::Path;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{HarnessError, Result};
use crate::eval::{Prediction, PromptRecord};
use crate::io;

/// Environment variable holding the bearer token, if the endpoint needs one.
pub const API_KEY_ENV: &str = "ICLCOVER_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiStyle {
    /// `{"prompt": ...}` in, `choices[0].text` out.
    #[default]
    Completions,
    /// `{"messages": [...]}` in, `choices[0].message.content` out.
    Chat,
}

#[derive(Debug, Clone)]
pub struct EndpointConfig {
    pub url: String,
    pub model: String,
    pub style: ApiStyle,
    pub max_tokens: u32,
    pub temperature: f64,
    pub stop: Vec<String>,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
    pub api_key: Option<String>,
}

impl EndpointConfig {
    /// Greedy decoding, stopping at a blank line.
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            model: model.into(),
            style: ApiStyle::default(),
            max_tokens: 256,
            temperature: 0.0,
            stop: vec!["\n\n".into()],
            max_attempts: 4,
            initial_backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(120),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
        }
    }

    fn body(&self, prompt: &str) -> Value {
        let mut body = json!({
            "model": self.model,
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
            "stop": self.stop,
        });
        match self.style {
            ApiStyle::Completions => body["prompt"] = json!(prompt),
            ApiStyle::Chat => body["messages"] = json!([{"role": "user", "content": prompt}]),
        }
        body
    }
}

pub struct CompletionClient {
    http: reqwest::blocking::Client,
    cfg: EndpointConfig,
}

enum Attempt {
    Done(String),
    Retry(String),
    Fail(HarnessError),
}

impl CompletionClient {
    pub fn new(cfg: EndpointConfig) -> Result<Self> {
        if cfg.max_attempts == 0 {
            return Err(HarnessError::Config("max_attempts must be positive".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| HarnessError::Config(format!("http client: {e}")))?;
        Ok(Self { http, cfg })
    }

    fn attempt(&self, prompt: &str) -> Attempt {
        let mut req = self.http.post(&self.cfg.url).json(&self.cfg.body(prompt));
        if let Some(key) = &self.cfg.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status();
        if status.is_server_error() || status == reqwest::StatusCode::TOO_MANY_REQUESTS {
            return Attempt::Retry(format!("HTTP {status}"));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Attempt::Fail(HarnessError::Transport {
                endpoint: self.cfg.url.clone(),
                attempts: 1,
                message: format!("HTTP {status}: {}", text.trim()),
            });
        }
        let malformed = |message: String| {
            Attempt::Fail(HarnessError::Response {
                endpoint: self.cfg.url.clone(),
                message,
            })
        };
        let value: Value = match resp.json() {
            Ok(v) => v,
            Err(e) => return malformed(e.to_string()),
        };
        let choice = &value["choices"][0];
        let text = match self.cfg.style {
            ApiStyle::Completions => choice["text"].as_str(),
            ApiStyle::Chat => choice["message"]["content"].as_str(),
        };
        match text {
            Some(t) => Attempt::Done(t.to_string()),
            None => malformed(format!("no completion text in {value}")),
        }
    }

    /// One completion, retried with exponential backoff on transport errors,
    /// 5xx and 429 responses.
    pub fn complete(&self, prompt: &str) -> Result<String> {
        let mut backoff = self.cfg.initial_backoff;
        let mut last = String::new();
        for attempt in 1..=self.cfg.max_attempts {
            match self.attempt(prompt) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(why) => {
                    log::warn!("{} attempt {attempt}: {why}", self.cfg.url);
                    last = why;
                }
            }
            if attempt < self.cfg.max_attempts {
                thread::sleep(backoff);
                backoff *= 2;
            }
        }
        Err(HarnessError::Transport {
            endpoint: self.cfg.url.clone(),
            attempts: self.cfg.max_attempts,
            message: last,
        })
    }
}

/// Completes every prompt in `prompts_path` and writes `predictions.jsonl` to `out_path`.
pub fn complete_prompts(prompts_path: &Path, out_path: &Path, cfg: EndpointConfig) -> Result<usize> {
    let prompts: Vec<PromptRecord> = io::read_jsonl(prompts_path)?;
    let client = CompletionClient::new(cfg)?;
    let predictions = prompts
        .iter()
        .map(|p| {
            Ok(Prediction {
                test_id: p.test_id.clone(),
                prediction: client.complete(&p.prompt)?.trim().to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    io::write_jsonl(out_path, &predictions)?;
    Ok(predictions.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_bodies_follow_api_style() {
        let mut cfg = EndpointConfig::new("http://x", "m");
        let b = cfg.body("P");
        assert_eq!(b["prompt"], "P");
        assert_eq!(b["temperature"], 0.0);
        assert_eq!(b["stop"][0], "\n\n");
        cfg.style = ApiStyle::Chat;
        let b = cfg.body("P");
        assert_eq!(b["messages"][0]["content"], "P");
        assert!(b.get("prompt").is_none());
    }
}
