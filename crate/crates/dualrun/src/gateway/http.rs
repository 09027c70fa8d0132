//! Live chat-completion client.
//!
//! Speaks one JSON schema: `POST <endpoint>` with
//! `{model, messages: [{role, content}], temperature, seed, max_tokens}`
//! and a reply whose `choices[0].message.content` is the JSON encoding of a
//! model action. `usage.prompt_tokens` / `usage.completion_tokens` are read
//! when present. The credential comes from the environment variable named
//! in the config and is sent as a bearer token.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use dualrun_core::llm::{ModelAction, ModelRequest, ModelResponse, Role, TokenUsage};

use super::{Backend, BackendError};

/// Counting semaphore bounding requests in flight across runs.
struct InFlight {
    limit: u32,
    used: Mutex<u32>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn acquire(&self) -> Permit<'_> {
        let mut used = self.used.lock().unwrap_or_else(|e| e.into_inner());
        while *used >= self.limit {
            used = self.freed.wait(used).unwrap_or_else(|e| e.into_inner());
        }
        *used += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut used = self.0.used.lock().unwrap_or_else(|e| e.into_inner());
        *used -= 1;
        self.0.freed.notify_one();
    }
}

pub struct HttpBackend {
    model_id: String,
    endpoint: String,
    api_key: String,
    agent: ureq::Agent,
    in_flight: InFlight,
}

impl HttpBackend {
    pub fn new(model_id: &str, endpoint: &str, api_key: String, max_in_flight: u32) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(300)))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Self {
            model_id: model_id.into(),
            endpoint: endpoint.into(),
            api_key,
            agent,
            in_flight: InFlight { limit: max_in_flight.max(1), used: Mutex::new(0), freed: Condvar::new() },
        }
    }

    pub fn from_env(
        model_id: &str,
        endpoint: &str,
        api_key_env: &str,
        max_in_flight: u32,
    ) -> Result<Self, BackendError> {
        let key = std::env::var(api_key_env)
            .map_err(|_| BackendError::Config(format!("environment variable `{api_key_env}` is not set")))?;
        Ok(Self::new(model_id, endpoint, key, max_in_flight))
    }

    fn body(&self, request: &ModelRequest) -> Value {
        let messages: Vec<Value> = request
            .messages
            .iter()
            .map(|m| {
                let (role, prefix) = match m.role {
                    Role::System => ("system", ""),
                    Role::User => ("user", ""),
                    Role::ToolResult => ("user", "[tool result]\n"),
                    Role::Assistant => ("assistant", ""),
                };
                json!({ "role": role, "content": format!("{prefix}{}", m.content.to_text()) })
            })
            .collect();
        let mut body = json!({
            "model": self.model_id,
            "messages": messages,
            "temperature": request.temperature.to_f64(),
            "seed": request.seed,
        });
        if let Some(cap) = request.max_completion_tokens {
            body["max_tokens"] = json!(cap);
        }
        body
    }
}

/// Extracts the action and usage from a provider reply.
pub fn parse_reply(reply: &Value) -> Result<ModelResponse, BackendError> {
    let content = reply
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Protocol("reply has no choices[0].message.content".into()))?;
    let trimmed = content.trim();
    let unfenced = trimmed
        .strip_prefix("```json")
        .or_else(|| trimmed.strip_prefix("```"))
        .and_then(|s| s.strip_suffix("```"))
        .unwrap_or(trimmed);
    let action: ModelAction = serde_json::from_str(unfenced.trim())
        .map_err(|e| BackendError::Protocol(format!("content is not a model action: {e}")))?;
    let usage = match reply.get("usage") {
        Some(u) => TokenUsage::new(
            u.get("prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
            u.get("completion_tokens").and_then(Value::as_u64).unwrap_or(0),
        ),
        None => TokenUsage::default(),
    };
    Ok(ModelResponse { action, usage })
}

impl Backend for HttpBackend {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        let _permit = self.in_flight.acquire();
        let mut response = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(self.body(request))
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(BackendError::Transport(format!("HTTP {status}")));
        }
        if !(200..300).contains(&status) {
            return Err(BackendError::Protocol(format!("HTTP {status}")));
        }
        let reply: Value =
            response.body_mut().read_json().map_err(|e| BackendError::Protocol(format!("reply is not JSON: {e}")))?;
        parse_reply(&reply)
    }
}
