//! Seeded stochastic stand-in for a language model.
//!
//! Every response is drawn from a ChaCha8 stream keyed by
//! `sha256(seed || sha256(canonical messages))`, so equal seeds and equal
//! histories give equal responses while any change to either reshuffles
//! the draw. The action distribution is configurable:
//!
//! * a user message starting with `STAGE:` is a stage directive; the stub
//!   answers with a `CODE_EDIT` with probability `directive_compliance_pct`
//!   and otherwise falls through to the free choice below;
//! * otherwise the kind is drawn from `kind_weights`, with `FINISH`
//!   unavailable until the conversation contains an edit;
//! * edits pick one of the program's weighted `candidates` as the new
//!   content of the target file;
//! * tool calls pick a tool from `tool_weights` with arguments derived from
//!   the task context.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use dualrun_core::llm::{estimate_tokens, FileEdit, ModelAction, ModelRequest, ModelResponse, Role, TokenUsage};
use dualrun_core::tool::{ToolKind, ToolRequest};
use dualrun_core::trace::canonical_json_bytes;

use super::{Backend, BackendError, TaskContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KindWeights {
    pub tool_action: u32,
    pub code_edit: u32,
    pub finish: u32,
}

impl Default for KindWeights {
    fn default() -> Self {
        Self { tool_action: 5, code_edit: 3, finish: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Candidate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<String>,
    /// Relative to the stub config file; inlined at load time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_file: Option<String>,
    pub weight: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StubConfig {
    pub kind_weights: KindWeights,
    pub tool_weights: BTreeMap<ToolKind, u32>,
    pub directive_compliance_pct: u32,
    /// Inclusive range of extra completion tokens per response, standing in
    /// for hidden reasoning.
    pub reasoning_tokens: [u64; 2],
    pub web_urls: Vec<String>,
    pub candidates: BTreeMap<String, Vec<Candidate>>,
}

impl Default for StubConfig {
    fn default() -> Self {
        Self {
            kind_weights: KindWeights::default(),
            tool_weights: [
                (ToolKind::ReadFile, 3),
                (ToolKind::WriteFile, 0),
                (ToolKind::ListFiles, 2),
                (ToolKind::WebScrape, 1),
                (ToolKind::RunCommand, 3),
                (ToolKind::Git, 1),
            ]
            .into_iter()
            .collect(),
            directive_compliance_pct: 95,
            reasoning_tokens: [50, 400],
            web_urls: Vec::new(),
            candidates: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct StubBackend {
    config: StubConfig,
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, options: &[(T, u32)]) -> Option<T> {
    let total: u64 = options.iter().map(|(_, w)| u64::from(*w)).sum();
    if total == 0 {
        return None;
    }
    let mut r = rng.gen_range(0..total);
    for (item, w) in options {
        if r < u64::from(*w) {
            return Some(*item);
        }
        r -= u64::from(*w);
    }
    None
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Tool,
    Edit,
    Finish,
}

impl StubBackend {
    pub fn new(config: StubConfig) -> Self {
        Self { config }
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = fs::read_to_string(path).map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        let mut config: StubConfig =
            serde_json::from_str(&text).map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for candidates in config.candidates.values_mut() {
            for c in candidates.iter_mut() {
                if let Some(rel) = c.content_file.take() {
                    let text = fs::read_to_string(base.join(&rel))
                        .map_err(|e| BackendError::Config(format!("candidate `{rel}`: {e}")))?;
                    c.content = Some(text);
                }
            }
        }
        Ok(Self::new(config))
    }

    pub fn config(&self) -> &StubConfig {
        &self.config
    }

    fn rng_for(request: &ModelRequest) -> ChaCha8Rng {
        let history = serde_json::to_value(&request.messages).expect("messages serialize");
        let history_hash = Sha256::digest(canonical_json_bytes(&history));
        let mut h = Sha256::new();
        h.update(request.seed.to_be_bytes());
        h.update(history_hash);
        ChaCha8Rng::from_seed(h.finalize().into())
    }

    fn decide(&self, request: &ModelRequest, rng: &mut ChaCha8Rng) -> ModelAction {
        let ctx = TaskContext::from_request(request);
        let assistant: Vec<String> =
            request.messages.iter().filter(|m| m.role == Role::Assistant).map(|m| m.content.to_text()).collect();
        let edited = assistant.iter().any(|a| a.contains("\"kind\":\"CODE_EDIT\""));
        let last = request.last_message();
        let directive = last.role == Role::User && last.content.as_slice().starts_with(b"STAGE:");
        if directive && rng.gen_range(0..100) < self.config.directive_compliance_pct {
            return self.edit(&ctx, rng);
        }
        let w = self.config.kind_weights;
        let finish = if edited { w.finish } else { 0 };
        let kind = pick(rng, &[(Kind::Tool, w.tool_action), (Kind::Edit, w.code_edit), (Kind::Finish, finish)])
            .unwrap_or(Kind::Edit);
        match kind {
            Kind::Edit => self.edit(&ctx, rng),
            Kind::Finish => ModelAction::Finish { status: "translation complete".into() },
            Kind::Tool => {
                let git_ready = assistant.iter().any(|a| a.contains("\"init\""));
                ModelAction::ToolAction { request: self.tool_call(&ctx, rng, edited, git_ready) }
            }
        }
    }

    fn edit(&self, ctx: &TaskContext, rng: &mut ChaCha8Rng) -> ModelAction {
        let options: Vec<(usize, u32)> = self
            .config
            .candidates
            .get(&ctx.program_id)
            .map(|cs| cs.iter().enumerate().map(|(i, c)| (i, c.weight)).collect())
            .unwrap_or_default();
        let content = pick(rng, &options)
            .and_then(|i| self.config.candidates[&ctx.program_id][i].content.clone())
            .unwrap_or_else(|| "raise SystemExit('no translation available')\n".into());
        let path = if ctx.target.is_empty() { "translated.py".to_string() } else { ctx.target.clone() };
        ModelAction::CodeEdit { edits: vec![FileEdit { path, search: None, content }] }
    }

    fn tool_call(&self, ctx: &TaskContext, rng: &mut ChaCha8Rng, edited: bool, git_ready: bool) -> ToolRequest {
        let mut weights: Vec<(ToolKind, u32)> = self.config.tool_weights.iter().map(|(k, w)| (*k, *w)).collect();
        if self.config.web_urls.is_empty() {
            weights.retain(|(k, _)| *k != ToolKind::WebScrape);
        }
        let tool = pick(rng, &weights).unwrap_or(ToolKind::ListFiles);
        match tool {
            ToolKind::ReadFile => {
                let path = if edited && rng.gen_bool(0.5) { &ctx.target } else { &ctx.source };
                ToolRequest::read_file(path)
            }
            ToolKind::WriteFile => ToolRequest::write_file("NOTES.md", &format!("notes for {}\n", ctx.program_id)),
            ToolKind::ListFiles => ToolRequest::list_files(if rng.gen_bool(0.5) { "*" } else { "**/*" }),
            ToolKind::WebScrape => {
                let url = &self.config.web_urls[rng.gen_range(0..self.config.web_urls.len())];
                ToolRequest::web_scrape(url)
            }
            ToolKind::RunCommand if edited => ToolRequest::run_command(&["python3", &ctx.target]),
            ToolKind::RunCommand => ToolRequest::run_command(&["cat", &ctx.source]),
            ToolKind::Git if git_ready => ToolRequest::git(&["status", "--short"]),
            ToolKind::Git => ToolRequest::git(&["init", "-q"]),
        }
    }
}

impl Backend for StubBackend {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        let mut rng = Self::rng_for(request);
        let action = self.decide(request, &mut rng);
        let [lo, hi] = self.config.reasoning_tokens;
        let reasoning = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        let prompt: u64 = request.messages.iter().map(|m| estimate_tokens(&m.content)).sum();
        let body = serde_json::to_vec(&action).expect("actions serialize");
        let usage = TokenUsage::new(prompt, estimate_tokens(&body) + reasoning);
        Ok(ModelResponse { action, usage })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dualrun_core::llm::Message;
    use dualrun_core::Rational;

    fn config() -> StubConfig {
        let mut c = StubConfig::default();
        c.candidates.insert(
            "P1".into(),
            vec![
                Candidate { content: Some("print('good')\n".into()), content_file: None, weight: 3 },
                Candidate { content: Some("print('bad')\n".into()), content_file: None, weight: 1 },
            ],
        );
        c
    }

    fn request(seed: u64, extra: &[&str]) -> ModelRequest {
        let mut messages = vec![
            Message::new(Role::System, "system"),
            Message::new(Role::User, "PROGRAM_ID: P1\nSOURCE: P1.cbl\nTARGET: translated.py\n"),
        ];
        for e in extra {
            messages.push(Message::new(Role::User, *e));
        }
        ModelRequest {
            prompt_bundle_id: "b".into(),
            messages,
            temperature: Rational::zero(),
            seed,
            max_completion_tokens: None,
        }
    }

    #[test]
    fn equal_seed_and_history_is_deterministic() {
        let b = StubBackend::new(config());
        for seed in 0..100 {
            let r = request(seed, &["hello"]);
            let first = b.complete(&r).unwrap();
            assert_eq!(b.complete(&r).unwrap(), first);
        }
    }

    #[test]
    fn seeds_diverge_on_identical_history() {
        let b = StubBackend::new(config());
        let differ = (0..100u64)
            .filter(|i| {
                let h = format!("history {i}");
                b.complete(&request(2 * i + 1, &[&h])).unwrap() != b.complete(&request(2 * i + 2, &[&h])).unwrap()
            })
            .count();
        assert!(differ >= 50, "only {differ} of 100 pairs differed");
    }

    #[test]
    fn directives_are_mostly_obeyed() {
        let b = StubBackend::new(config());
        let edits = (0..200)
            .filter(|s| {
                matches!(b.complete(&request(*s, &["STAGE: APPLY"])).unwrap().action, ModelAction::CodeEdit { .. })
            })
            .count();
        assert!(edits >= 170, "{edits}");
    }

    #[test]
    fn never_finishes_before_editing() {
        let b = StubBackend::new(config());
        for s in 0..300 {
            let a = b.complete(&request(s, &["go"])).unwrap().action;
            assert!(!matches!(a, ModelAction::Finish { .. }));
        }
    }

    #[test]
    fn default_config_terminates_well_within_step_limit() {
        // Simulated loop: every action is echoed back as an assistant turn
        // followed by a short tool result.
        let b = StubBackend::new(config());
        let limit = 30;
        let mut finished = 0;
        for seed in 0..500u64 {
            let mut r = request(seed, &[]);
            for _ in 0..limit {
                let a = b.complete(&r).unwrap().action;
                if matches!(a, ModelAction::Finish { .. }) {
                    finished += 1;
                    break;
                }
                r.messages.push(Message::new(Role::Assistant, serde_json::to_string(&a).unwrap()));
                r.messages.push(Message::new(Role::ToolResult, "OK"));
            }
        }
        assert!(finished * 100 > 500 * 99, "{finished}/500 finished");
    }
}
