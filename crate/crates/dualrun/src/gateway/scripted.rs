//! Replay backend driven by JSON scripts.
//!
//! A script lives at `<scripts_dir>/<program_id>.json`, falling back to
//! `default.json`. It holds positional `responses` and keyed `rules`:
//!
//! ```json
//! {
//!   "rules": [
//!     { "when": { "last_message_contains": "STAGE: VALIDATE FAILED" },
//!       "response": { "kind": "CODE_EDIT", "edits": [{ "path": "translated.py", "content_file": "fixed.py" }] } }
//!   ],
//!   "responses": [
//!     { "kind": "CODE_EDIT", "edits": [{ "path": "translated.py", "content": "print(1)\n" }] },
//!     { "kind": "FINISH", "status": "done" }
//!   ]
//! }
//! ```
//!
//! The first rule whose every condition holds wins. Otherwise the response
//! at the request's turn index (assistant messages so far) is used, with
//! the last response repeating once the list is exhausted. `content_file`
//! paths are relative to the scripts directory and are read at load time.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;
use serde_json::Value;

use dualrun_core::llm::{ModelAction, ModelRequest, ModelResponse, Role, TokenUsage};

use super::{Backend, BackendError, TaskContext};

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Condition {
    pub last_message_contains: Option<String>,
    pub any_message_contains: Option<String>,
    /// Exact turn index.
    pub turn: Option<usize>,
    pub min_turn: Option<usize>,
}

impl Condition {
    fn holds(&self, request: &ModelRequest) -> bool {
        let turn = request.turn_index();
        let last = request.last_message().content.to_text();
        self.last_message_contains.as_ref().is_none_or(|s| last.contains(s.as_str()))
            && self.any_message_contains.as_ref().is_none_or(|s| {
                request.messages.iter().any(|m| m.role != Role::System && m.content.to_text().contains(s.as_str()))
            })
            && self.turn.is_none_or(|t| t == turn)
            && self.min_turn.is_none_or(|t| turn >= t)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub when: Condition,
    pub response: ModelResponse,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Script {
    pub rules: Vec<Rule>,
    pub responses: Vec<ModelResponse>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptFile {
    #[serde(default)]
    #[allow(dead_code)]
    program_id: Option<String>,
    #[serde(default)]
    rules: Vec<RuleFile>,
    #[serde(default)]
    responses: Vec<Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleFile {
    when: Condition,
    response: Value,
}

impl Script {
    pub fn new(responses: Vec<ModelAction>) -> Self {
        Self { rules: Vec::new(), responses: responses.into_iter().map(response).collect() }
    }

    pub fn with_rule(mut self, when: Condition, action: ModelAction) -> Self {
        self.rules.push(Rule { when, response: response(action) });
        self
    }

    /// Pure function of the script and the request.
    pub fn select(&self, request: &ModelRequest) -> Option<&ModelResponse> {
        if let Some(rule) = self.rules.iter().find(|r| r.when.holds(request)) {
            return Some(&rule.response);
        }
        let turn = request.turn_index();
        self.responses.get(turn).or_else(|| self.responses.last())
    }

    pub fn parse(json: &str, base_dir: &Path) -> Result<Self, BackendError> {
        let file: ScriptFile = serde_json::from_str(json).map_err(|e| BackendError::Config(e.to_string()))?;
        let rules = file
            .rules
            .into_iter()
            .map(|r| Ok(Rule { when: r.when, response: template(r.response, base_dir)? }))
            .collect::<Result<_, BackendError>>()?;
        let responses =
            file.responses.into_iter().map(|v| template(v, base_dir)).collect::<Result<_, BackendError>>()?;
        Ok(Self { rules, responses })
    }
}

fn response(action: ModelAction) -> ModelResponse {
    ModelResponse { action, usage: TokenUsage::default() }
}

/// Inlines `content_file` references and splits an optional `usage` field
/// off the action.
fn template(mut value: Value, base_dir: &Path) -> Result<ModelResponse, BackendError> {
    let usage = match value.as_object_mut().and_then(|o| o.remove("usage")) {
        Some(u) => serde_json::from_value(u).map_err(|e| BackendError::Config(e.to_string()))?,
        None => TokenUsage::default(),
    };
    if let Some(edits) = value.get_mut("edits").and_then(Value::as_array_mut) {
        for edit in edits {
            let Some(obj) = edit.as_object_mut() else { continue };
            if let Some(file) = obj.remove("content_file") {
                let rel = file.as_str().ok_or_else(|| BackendError::Config("content_file must be a string".into()))?;
                let text = fs::read_to_string(base_dir.join(rel))
                    .map_err(|e| BackendError::Config(format!("content_file `{rel}`: {e}")))?;
                obj.insert("content".into(), Value::String(text));
            }
        }
    }
    let action: ModelAction = serde_json::from_value(value).map_err(|e| BackendError::Config(e.to_string()))?;
    Ok(ModelResponse { action, usage })
}

#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    scripts: BTreeMap<String, Script>,
    fallback: Option<Script>,
}

impl ScriptedBackend {
    pub fn new(fallback: Script) -> Self {
        Self { scripts: BTreeMap::new(), fallback: Some(fallback) }
    }

    pub fn with_program(mut self, program_id: &str, script: Script) -> Self {
        self.scripts.insert(program_id.into(), script);
        self
    }

    /// Loads every `*.json` script in `dir`; `default.json` is the fallback.
    pub fn load(dir: &Path) -> Result<Self, BackendError> {
        let entries = fs::read_dir(dir).map_err(|e| BackendError::Config(format!("{}: {e}", dir.display())))?;
        let mut backend = ScriptedBackend::default();
        for entry in entries {
            let path = entry.map_err(|e| BackendError::Config(e.to_string()))?.path();
            if path.extension().is_none_or(|x| x != "json") {
                continue;
            }
            let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let text = fs::read_to_string(&path).map_err(|e| BackendError::Config(e.to_string()))?;
            let script =
                Script::parse(&text, dir).map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
            if stem == "default" {
                backend.fallback = Some(script);
            } else {
                backend.scripts.insert(stem, script);
            }
        }
        Ok(backend)
    }

    fn script_for(&self, request: &ModelRequest) -> Option<&Script> {
        let ctx = TaskContext::from_request(request);
        self.scripts.get(&ctx.program_id).or(self.fallback.as_ref())
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        let script = self
            .script_for(request)
            .ok_or_else(|| BackendError::Protocol("no script for this program and no default".into()))?;
        script
            .select(request)
            .cloned()
            .ok_or_else(|| BackendError::Protocol("script has no applicable response".into()))
    }
}
