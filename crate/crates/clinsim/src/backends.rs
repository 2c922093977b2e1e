//! Text-generation backends: a deterministic scripted queue for tests
//! and offline runs, and a remote chat-completion client with retries.
//!
//! Every `generate` call, including failed attempts, lands in the
//! backend's audit log so runs can be replayed and inspected.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("rate limited (status 429)")]
    RateLimited,
    #[error("scripted response queue exhausted")]
    Exhausted,
    #[error("backend returned an empty completion")]
    EmptyCompletion,
    #[error("scripted backend already claimed by session {owner}, requested by {requested}")]
    OwnershipViolation { owner: u64, requested: u64 },
    #[error("invalid backend descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("missing credential environment variable {0}")]
    MissingCredential(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_) | BackendError::RateLimited)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageKind {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub kind: MessageKind,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { kind: MessageKind::User, content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { kind: MessageKind::Assistant, content: content.into() }
    }
}

pub const MAX_TOKENS_CEILING: u32 = 8192;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams { temperature: 0.7, max_tokens: 1024, seed: None }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), BackendError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::InvalidDescriptor(format!(
                "temperature {} out of [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 || self.max_tokens > MAX_TOKENS_CEILING {
            return Err(BackendError::InvalidDescriptor(format!(
                "max_tokens {} out of (0, {MAX_TOKENS_CEILING}]",
                self.max_tokens
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Scripted,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Backoff delays between attempts, in milliseconds.
    pub backoff_ms: Vec<u64>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, backoff_ms: vec![1000, 2000, 4000] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credential_env: Option<String>,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    60_000
}

impl BackendDescriptor {
    pub fn validate(&self) -> Result<(), BackendError> {
        match self.kind {
            BackendKind::Remote => {
                if self.endpoint.is_none() || self.model_name.is_none() {
                    return Err(BackendError::InvalidDescriptor(
                        "remote backend requires endpoint and model_name".into(),
                    ));
                }
            }
            BackendKind::Scripted => {
                if self.endpoint.is_some() || self.model_name.is_some() {
                    return Err(BackendError::InvalidDescriptor(
                        "scripted backend forbids endpoint and model_name".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: usize,
    pub system: String,
    pub messages: Vec<ChatMessage>,
    pub output: Option<String>,
    pub error: Option<String>,
    pub attempts: u32,
    pub latency_ms: u64,
}

#[derive(Debug, Default)]
pub struct AuditLog {
    entries: Mutex<Vec<AuditEntry>>,
}

impl AuditLog {
    fn record(&self, mut entry: AuditEntry) {
        let mut entries = self.entries.lock().unwrap();
        entry.seq = entries.len();
        entries.push(entry);
    }

    pub fn snapshot(&self) -> Vec<AuditEntry> {
        self.entries.lock().unwrap().clone()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for entry in self.snapshot() {
            out.push_str(&serde_json::to_string(&entry).expect("audit entry serializes"));
            out.push('\n');
        }
        out
    }
}

pub trait TextBackend: Send + Sync {
    fn generate(
        &self,
        system: &str,
        messages: &[ChatMessage],
        params: &GenerationParams,
    ) -> Result<String, BackendError>;

    fn audit(&self) -> Vec<AuditEntry>;
}

/// Replays a fixed response list in order, ignoring inputs. One
/// instance belongs to one agent in one session; the ownership tag
/// catches accidental sharing across sessions.
pub struct ScriptedBackend {
    queue: Mutex<VecDeque<String>>,
    owner: Mutex<Option<u64>>,
    audit: AuditLog,
}

impl ScriptedBackend {
    pub fn new(responses: impl IntoIterator<Item = String>) -> Self {
        ScriptedBackend {
            queue: Mutex::new(responses.into_iter().collect()),
            owner: Mutex::new(None),
            audit: AuditLog::default(),
        }
    }

    pub fn claim(&self, session: u64) -> Result<(), BackendError> {
        let mut owner = self.owner.lock().unwrap();
        match *owner {
            None => {
                *owner = Some(session);
                Ok(())
            }
            Some(existing) if existing == session => Ok(()),
            Some(existing) => {
                Err(BackendError::OwnershipViolation { owner: existing, requested: session })
            }
        }
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().unwrap().len()
    }
}

pub fn script_backend(responses: impl IntoIterator<Item = String>) -> Arc<ScriptedBackend> {
    Arc::new(ScriptedBackend::new(responses))
}

impl TextBackend for ScriptedBackend {
    fn generate(
        &self,
        system: &str,
        messages: &[ChatMessage],
        params: &GenerationParams,
    ) -> Result<String, BackendError> {
        params.validate()?;
        let start = Instant::now();
        let next = self.queue.lock().unwrap().pop_front();
        let result = match next {
            Some(text) if !text.trim().is_empty() => Ok(text),
            Some(_) => Err(BackendError::EmptyCompletion),
            None => Err(BackendError::Exhausted),
        };
        self.audit.record(AuditEntry {
            seq: 0,
            system: system.to_string(),
            messages: messages.to_vec(),
            output: result.as_ref().ok().cloned(),
            error: result.as_ref().err().map(|e| e.to_string()),
            attempts: 1,
            latency_ms: start.elapsed().as_millis() as u64,
        });
        result
    }

    fn audit(&self) -> Vec<AuditEntry> {
        self.audit.snapshot()
    }
}

/// Client for an HTTPS chat-completion endpoint. Credentials come only
/// from the environment variable named in the descriptor.
pub struct RemoteBackend {
    descriptor: BackendDescriptor,
    client: reqwest::blocking::Client,
    audit: AuditLog,
    /// Disabled in tests so fault-injection cases run instantly.
    sleep_on_backoff: bool,
}

impl RemoteBackend {
    pub fn new(descriptor: BackendDescriptor) -> Result<Self, BackendError> {
        descriptor.validate()?;
        if descriptor.kind != BackendKind::Remote {
            return Err(BackendError::InvalidDescriptor("expected a remote descriptor".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(descriptor.timeout_ms))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(RemoteBackend { descriptor, client, audit: AuditLog::default(), sleep_on_backoff: true })
    }

    pub fn without_backoff_sleep(mut self) -> Self {
        self.sleep_on_backoff = false;
        self
    }

    fn attempt(
        &self,
        system: &str,
        messages: &[ChatMessage],
        params: &GenerationParams,
    ) -> Result<String, BackendError> {
        let endpoint = self.descriptor.endpoint.as_deref().expect("validated");
        let model = self.descriptor.model_name.as_deref().expect("validated");
        let mut wire_messages = vec![serde_json::json!({"role": "system", "content": system})];
        for m in messages {
            let role = match m.kind {
                MessageKind::System => "system",
                MessageKind::User => "user",
                MessageKind::Assistant => "assistant",
            };
            wire_messages.push(serde_json::json!({"role": role, "content": m.content}));
        }
        let mut body = serde_json::json!({
            "model": model,
            "messages": wire_messages,
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        });
        if let Some(seed) = params.seed {
            body["seed"] = serde_json::json!(seed);
        }
        let mut request = self.client.post(endpoint).json(&body);
        if let Some(var) = &self.descriptor.credential_env {
            let key =
                std::env::var(var).map_err(|_| BackendError::MissingCredential(var.clone()))?;
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status();
        if status.as_u16() == 429 {
            return Err(BackendError::RateLimited);
        }
        if !status.is_success() {
            return Err(BackendError::Transport(format!("status {status}")));
        }
        let parsed: serde_json::Value =
            response.json().map_err(|e| BackendError::Transport(e.to_string()))?;
        let content = parsed["choices"][0]["message"]["content"].as_str().unwrap_or("").to_string();
        if content.trim().is_empty() {
            return Err(BackendError::EmptyCompletion);
        }
        Ok(content)
    }
}

impl TextBackend for RemoteBackend {
    fn generate(
        &self,
        system: &str,
        messages: &[ChatMessage],
        params: &GenerationParams,
    ) -> Result<String, BackendError> {
        params.validate()?;
        let start = Instant::now();
        let retry = &self.descriptor.retry;
        let mut attempts = 0;
        let result = loop {
            attempts += 1;
            match self.attempt(system, messages, params) {
                Ok(text) => break Ok(text),
                Err(err) if err.is_retryable() && attempts < retry.max_attempts => {
                    if self.sleep_on_backoff {
                        let idx = (attempts as usize - 1).min(retry.backoff_ms.len().saturating_sub(1));
                        if let Some(&ms) = retry.backoff_ms.get(idx) {
                            std::thread::sleep(Duration::from_millis(ms));
                        }
                    }
                }
                Err(err) => break Err(err),
            }
        };
        self.audit.record(AuditEntry {
            seq: 0,
            system: system.to_string(),
            messages: messages.to_vec(),
            output: result.as_ref().ok().cloned(),
            error: result.as_ref().err().map(|e| e.to_string()),
            attempts,
            latency_ms: start.elapsed().as_millis() as u64,
        });
        result
    }

    fn audit(&self) -> Vec<AuditEntry> {
        self.audit.snapshot()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_queue_semantics() {
        let backend = script_backend(["a".to_string(), "b".to_string()]);
        let params = GenerationParams::default();
        assert_eq!(backend.generate("sys", &[], &params).unwrap(), "a");
        assert_eq!(backend.generate("sys", &[], &params).unwrap(), "b");
        assert!(matches!(backend.generate("sys", &[], &params), Err(BackendError::Exhausted)));
        assert_eq!(backend.audit().len(), 3);
    }

    #[test]
    fn empty_scripted_queue_exhausts_immediately() {
        let backend = script_backend([]);
        assert!(matches!(
            backend.generate("sys", &[], &GenerationParams::default()),
            Err(BackendError::Exhausted)
        ));
    }

    #[test]
    fn scripted_empty_response_is_empty_completion() {
        let backend = script_backend(["  ".to_string()]);
        assert!(matches!(
            backend.generate("sys", &[], &GenerationParams::default()),
            Err(BackendError::EmptyCompletion)
        ));
    }

    #[test]
    fn ownership_tag_rejects_cross_session_sharing() {
        let backend = script_backend(["x".to_string()]);
        backend.claim(1).unwrap();
        backend.claim(1).unwrap();
        assert!(matches!(
            backend.claim(2),
            Err(BackendError::OwnershipViolation { owner: 1, requested: 2 })
        ));
    }

    #[test]
    fn descriptor_validation() {
        let scripted = BackendDescriptor {
            kind: BackendKind::Scripted,
            endpoint: None,
            model_name: None,
            credential_env: None,
            retry: RetryPolicy::default(),
            timeout_ms: 1000,
        };
        scripted.validate().unwrap();
        let mut bad = scripted.clone();
        bad.endpoint = Some("http://x".into());
        assert!(bad.validate().is_err());

        let remote = BackendDescriptor {
            kind: BackendKind::Remote,
            endpoint: Some("http://x".into()),
            model_name: Some("m".into()),
            credential_env: None,
            retry: RetryPolicy::default(),
            timeout_ms: 1000,
        };
        remote.validate().unwrap();
        let mut bad = remote.clone();
        bad.model_name = None;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn params_validation() {
        let mut p = GenerationParams::default();
        p.validate().unwrap();
        p.temperature = 2.5;
        assert!(p.validate().is_err());
        p.temperature = 0.7;
        p.max_tokens = 0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn audit_entry_per_call_even_on_failure() {
        let backend = script_backend(["x".to_string()]);
        let params = GenerationParams::default();
        let _ = backend.generate("s", &[], &params);
        let _ = backend.generate("s", &[], &params);
        let audit = backend.audit();
        assert_eq!(audit.len(), 2);
        assert!(audit[0].output.is_some());
        assert!(audit[1].error.is_some());
        assert_eq!(audit[1].seq, 1);
    }
}
