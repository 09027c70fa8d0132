//! Model backends behind one interface, plus the per-run client that meters
//! tokens, retries transport failures and keeps an audit transcript.
//!
//! Orchestrators only ever see [`ModelClient`]; nothing in its interface
//! reveals which backend served a response.

mod http;
mod scripted;
mod stub;

use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use dualrun_core::llm::{estimate_tokens, ModelRequest, ModelResponse, TokenUsage};
use dualrun_core::model::{BackendSpec, RunTokens};

pub use http::HttpBackend;
pub use scripted::{Condition, Script, ScriptedBackend};
pub use stub::{StubBackend, StubConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    /// Worth retrying: connection failures, throttling, server errors.
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

pub trait Backend: Send + Sync {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("model call failed after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    /// Delay before the second attempt; doubled for each one after.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { attempts: 3, base_delay: Duration::from_millis(250) }
    }
}

/// Prompt tokens for the whole conversation, completion tokens for the
/// serialized action.
pub fn estimate_usage(request: &ModelRequest, response: &ModelResponse) -> TokenUsage {
    let prompt: u64 = request.messages.iter().map(|m| estimate_tokens(&m.content)).sum();
    let completion = estimate_tokens(&serde_json::to_vec(&response.action).expect("actions serialize"));
    TokenUsage::new(prompt, completion)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub call: u32,
    pub attempt: u32,
    pub request: ModelRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<ModelResponse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Per-run view of a shared backend. Owns the run's token ledger.
pub struct ModelClient<'a> {
    backend: &'a dyn Backend,
    retry: RetryPolicy,
    tokens: RunTokens,
    transcript: Vec<TranscriptLine>,
}

impl<'a> ModelClient<'a> {
    pub fn new(backend: &'a dyn Backend, model_id: &str, retry: RetryPolicy) -> Self {
        Self {
            backend,
            retry,
            tokens: RunTokens { model_id: model_id.into(), ..RunTokens::default() },
            transcript: Vec::new(),
        }
    }

    /// One logical model call. Missing usage is estimated, completion usage
    /// is clamped to the request's cap, and the result is metered.
    pub fn complete(&mut self, request: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        request.validate().map_err(|e| GatewayError::InvalidRequest(e.to_string()))?;
        let call = self.tokens.calls;
        let mut delay = self.retry.base_delay;
        let mut last = String::new();
        for attempt in 0..self.retry.attempts.max(1) {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            let outcome = self.backend.complete(request);
            self.transcript.push(TranscriptLine {
                call,
                attempt,
                request: request.clone(),
                response: outcome.as_ref().ok().cloned(),
                error: outcome.as_ref().err().map(ToString::to_string),
            });
            match outcome {
                Ok(mut response) => {
                    if response.usage == TokenUsage::default() {
                        response.usage = estimate_usage(request, &response);
                    }
                    if let Some(cap) = request.max_completion_tokens {
                        response.usage.completion_tokens = response.usage.completion_tokens.min(cap);
                    }
                    self.tokens.record(response.usage);
                    if let Some(line) = self.transcript.last_mut() {
                        line.response = Some(response.clone());
                    }
                    return Ok(response);
                }
                Err(BackendError::Transport(msg)) => last = msg,
                Err(e) => return Err(GatewayError::Protocol(e.to_string())),
            }
        }
        Err(GatewayError::Exhausted { attempts: self.retry.attempts.max(1), last })
    }

    pub fn tokens(&self) -> &RunTokens {
        &self.tokens
    }

    pub fn into_parts(self) -> (RunTokens, Vec<TranscriptLine>) {
        (self.tokens, self.transcript)
    }
}

pub fn write_transcript(path: &Path, lines: &[TranscriptLine]) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    for line in lines {
        serde_json::to_writer(&mut out, line)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Instantiates the backend named in a config. Relative paths resolve
/// against `base_dir`, the directory of the config file.
pub fn build_backend(spec: &BackendSpec, base_dir: &Path) -> Result<Arc<dyn Backend>, BackendError> {
    Ok(match spec {
        BackendSpec::Scripted { scripts_dir, .. } => Arc::new(ScriptedBackend::load(&base_dir.join(scripts_dir))?),
        BackendSpec::Stub { config, .. } => Arc::new(StubBackend::load(&base_dir.join(config))?),
        BackendSpec::Http { model_id, endpoint, api_key_env, max_in_flight } => {
            Arc::new(HttpBackend::from_env(model_id, endpoint, api_key_env, *max_in_flight)?)
        }
    })
}

/// Fields the task prompt carries on lines of the form `KEY: value`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaskContext {
    pub program_id: String,
    pub source: String,
    pub target: String,
}

impl TaskContext {
    /// Reads the first user message of a conversation.
    pub fn from_request(request: &ModelRequest) -> Self {
        let mut ctx = TaskContext::default();
        let Some(task) = request.messages.iter().find(|m| m.role == dualrun_core::llm::Role::User) else {
            return ctx;
        };
        for line in task.content.to_text().lines() {
            if let Some((key, value)) = line.split_once(':') {
                let value = value.trim().to_string();
                // First occurrence wins; the source text below may repeat a key.
                let slot = match key.trim() {
                    "PROGRAM_ID" => &mut ctx.program_id,
                    "SOURCE" => &mut ctx.source,
                    "TARGET" => &mut ctx.target,
                    _ => continue,
                };
                if slot.is_empty() {
                    *slot = value;
                }
            }
        }
        ctx
    }
}
