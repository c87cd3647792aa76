//! Completion backends used by the commonsense validator.
//!
//! The HTTP backend speaks the common chat-completions wire shape: it POSTs
//! `{model, messages: [{role: "user", content}], temperature: 0}` and pulls the
//! answer out of the response with a JSON pointer. The mock backend answers
//! from a blacklist and is fully deterministic.

use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("backend unavailable after {attempts} attempt(s): {last}")]
    BackendUnavailable { attempts: usize, last: String },
    #[error("authentication rejected (HTTP {0})")]
    AuthError(u16),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("request rejected (HTTP {status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("invalid client configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    #[default]
    Mock,
}

/// Answers "No" for prompts mentioning a blacklisted triplet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockRule {
    pub blacklist: BTreeSet<String>,
    pub default_answer: bool,
}

impl Default for MockRule {
    fn default() -> Self {
        Self { blacklist: BTreeSet::new(), default_answer: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientConfig {
    pub backend: BackendKind,
    pub endpoint: String,
    pub model: String,
    pub timeout_secs: f64,
    pub max_retries: usize,
    pub backoff_base_secs: f64,
    pub max_in_flight: usize,
    /// Environment variable holding a bearer token; unset means no auth header.
    pub api_key_env: String,
    /// JSON pointer to the answer text in the response body.
    pub response_path: String,
    /// Optional JSONL request log.
    pub request_log: Option<PathBuf>,
    pub mock: MockRule,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Mock,
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "llama-3-8b-instruct".into(),
            timeout_secs: 30.0,
            max_retries: 3,
            backoff_base_secs: 1.0,
            max_in_flight: 4,
            api_key_env: "LLM_API_KEY".into(),
            response_path: "/choices/0/message/content".into(),
            request_log: None,
            mock: MockRule::default(),
        }
    }
}

impl ClientConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(LlmError::Config("timeout must be positive".into()));
        }
        if !(self.backoff_base_secs.is_finite() && self.backoff_base_secs >= 0.0) {
            return Err(LlmError::Config("backoff base must be non-negative".into()));
        }
        if self.max_in_flight == 0 {
            return Err(LlmError::Config("max_in_flight must be at least 1".into()));
        }
        if self.backend == BackendKind::Http && !self.response_path.is_empty() && !self.response_path.starts_with('/') {
            return Err(LlmError::Config("response_path must be a JSON pointer starting with '/'".into()));
        }
        Ok(())
    }
}

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, LlmError>;
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for Box<T> {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        (**self).complete(prompt)
    }
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for &T {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        (**self).complete(prompt)
    }
}

pub fn build_backend(cfg: &ClientConfig) -> Result<Box<dyn CompletionBackend>, LlmError> {
    cfg.validate()?;
    Ok(match cfg.backend {
        BackendKind::Mock => Box::new(MockBackend::new(cfg.mock.clone())),
        BackendKind::Http => Box::new(HttpBackend::new(cfg.clone())?),
    })
}

/// Deterministic offline backend. Keeps a log of every prompt it receives.
#[derive(Debug, Default)]
pub struct MockBackend {
    rule: MockRule,
    log: Mutex<Vec<String>>,
}

impl MockBackend {
    pub fn new(rule: MockRule) -> Self {
        Self { rule, log: Mutex::new(Vec::new()) }
    }

    pub fn answer(&self, prompt: &str) -> &'static str {
        if self.rule.blacklist.iter().any(|b| prompt.contains(b.as_str())) {
            "No"
        } else if self.rule.default_answer {
            "Yes"
        } else {
            "No"
        }
    }

    pub fn prompts(&self) -> Vec<String> {
        self.log.lock().expect("mock log poisoned").clone()
    }

    pub fn query_count(&self) -> usize {
        self.log.lock().expect("mock log poisoned").len()
    }
}

impl CompletionBackend for MockBackend {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        self.log.lock().expect("mock log poisoned").push(prompt.to_string());
        Ok(self.answer(prompt).to_string())
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct AdmissionGate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a AdmissionGate);

impl AdmissionGate {
    fn new(slots: usize) -> Self {
        Self { free: Mutex::new(slots), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("gate poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("gate poisoned");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("gate poisoned") += 1;
        self.0.cv.notify_one();
    }
}

enum Attempt {
    Done(Result<String, LlmError>),
    Retry(String),
}

pub struct HttpBackend {
    cfg: ClientConfig,
    client: reqwest::blocking::Client,
    gate: AdmissionGate,
    log: Option<Mutex<File>>,
}

impl HttpBackend {
    pub fn new(cfg: ClientConfig) -> Result<Self, LlmError> {
        cfg.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_secs))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        let log = match &cfg.request_log {
            Some(path) => Some(Mutex::new(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| LlmError::Config(format!("request log {}: {e}", path.display())))?,
            )),
            None => None,
        };
        let gate = AdmissionGate::new(cfg.max_in_flight);
        Ok(Self { cfg, client, gate, log })
    }

    pub fn request_body(&self, prompt: &str) -> serde_json::Value {
        json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        })
    }

    fn record(&self, prompt: &str, status: Option<u16>, started: Instant) {
        let Some(log) = &self.log else { return };
        let ts = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
        let line = json!({
            "timestamp_ms": ts,
            "prompt_sha256": hex::encode(Sha256::digest(prompt.as_bytes())),
            "status": status,
            "latency_ms": started.elapsed().as_millis() as u64,
        });
        if let Ok(mut f) = log.lock() {
            let _ = writeln!(f, "{line}");
        }
    }

    fn attempt(&self, prompt: &str) -> Attempt {
        let started = Instant::now();
        let mut req = self.client.post(&self.cfg.endpoint).json(&self.request_body(prompt));
        if let Ok(key) = std::env::var(&self.cfg.api_key_env) {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => {
                self.record(prompt, None, started);
                return Attempt::Retry(e.to_string());
            }
        };
        let status = resp.status().as_u16();
        self.record(prompt, Some(status), started);
        match status {
            200..=299 => {}
            401 | 403 => return Attempt::Done(Err(LlmError::AuthError(status))),
            429 | 500..=599 => return Attempt::Retry(format!("HTTP {status}")),
            _ => {
                let body = resp.text().unwrap_or_default();
                return Attempt::Done(Err(LlmError::Rejected { status, body }));
            }
        }
        let body: serde_json::Value = match resp.json() {
            Ok(v) => v,
            Err(e) => return Attempt::Done(Err(LlmError::MalformedResponse(e.to_string()))),
        };
        Attempt::Done(extract_text(&body, &self.cfg.response_path))
    }
}

/// Text at `pointer` in `body`.
pub fn extract_text(body: &serde_json::Value, pointer: &str) -> Result<String, LlmError> {
    match body.pointer(pointer) {
        Some(serde_json::Value::String(s)) => Ok(s.clone()),
        Some(other) => Err(LlmError::MalformedResponse(format!("{pointer} is not a string: {other}"))),
        None => Err(LlmError::MalformedResponse(format!("{pointer} missing from response"))),
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let _permit = self.gate.acquire();
        let mut last = String::new();
        for attempt in 0..=self.cfg.max_retries {
            match self.attempt(prompt) {
                Attempt::Done(result) => return result,
                Attempt::Retry(reason) => {
                    tracing::warn!(attempt = attempt + 1, %reason, "completion request failed");
                    last = reason;
                }
            }
            if attempt < self.cfg.max_retries {
                std::thread::sleep(Duration::from_secs_f64(self.cfg.backoff_base_secs * 2f64.powi(attempt as i32)));
            }
        }
        Err(LlmError::BackendUnavailable { attempts: self.cfg.max_retries + 1, last })
    }
}
