//! The two execution engines and what they share: workspace setup, the
//! trace recorder, prompt construction and run-record assembly.

mod agentic;
mod apply;
mod deterministic;
mod prompts;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use dualrun_core::compare::ExecutionOutcome;
use dualrun_core::llm::{estimate_tokens, Message, ModelAction, ModelRequest, Role, TokenUsage};
use dualrun_core::model::{
    AgenticSummary, FailureClass, Mode, ProgramUnit, RunConfig, RunRecord, RunTokens, StageId, StageOutcome, StrategyId,
};
use dualrun_core::tool::{ToolErrorCode, ToolKind, ToolRequest, ToolStatus};
use dualrun_core::trace::{canonical_json_bytes, canonicalize, sha256_hex, trace_hash, RawTrace, RawTraceEntry};
use dualrun_core::{Rational, SCHEMA_VERSION};

use crate::gateway::{Backend, ModelClient, RetryPolicy, TranscriptLine};
use crate::harness::{execute_program, score, ExecutableSpec, HarnessError, TestEvaluation};
use crate::sandbox::Sandbox;
use crate::tools::{invoke, ToolResult};

pub use agentic::run_agentic;
pub use apply::{apply_with_fallback, builtin_strategy, EditStrategy, ExactPatch, FallbackResult, WholeFileRewrite};
pub use deterministic::run_deterministic;
pub use prompts::{PromptBundle, BUILTIN_BUNDLE};

/// Everything one run needs; shared inputs are borrowed immutably.
#[derive(Debug, Clone, Copy)]
pub struct RunInputs<'a> {
    pub program: &'a ProgramUnit,
    /// Directory the manifest's relative paths resolve against.
    pub suite_dir: &'a Path,
    pub config: &'a RunConfig,
    pub run_index: u32,
    /// Fresh per-run workspace; created if missing.
    pub workspace: &'a Path,
    /// Reference outcome per test, in test order.
    pub references: &'a [ExecutionOutcome],
    pub web_fixtures: Option<&'a Path>,
    pub retry: RetryPolicy,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: RunRecord,
    pub transcript: Vec<TranscriptLine>,
}

/// Dispatches on the config's mode.
pub fn run(inputs: &RunInputs<'_>, backend: &dyn Backend) -> RunOutput {
    match inputs.config.mode {
        Mode::Deterministic => run_deterministic(inputs, backend),
        Mode::Agentic => run_agentic(inputs, backend),
    }
}

pub fn run_id(program_id: &str, mode: Mode, run_index: u32) -> String {
    format!("{program_id}-{}-{run_index}", mode.slug())
}

/// Tool invocations with simultaneous trace recording.
pub struct Recorder<'s> {
    sandbox: &'s Sandbox,
    raw: RawTrace,
    started: Instant,
    modified: BTreeSet<String>,
}

impl<'s> Recorder<'s> {
    pub fn new(sandbox: &'s Sandbox, run_id: &str, fingerprint: &str) -> Self {
        Self {
            sandbox,
            raw: RawTrace::new(run_id, fingerprint, sandbox.root().to_string_lossy()),
            started: Instant::now(),
            modified: BTreeSet::new(),
        }
    }

    pub fn sandbox(&self) -> &Sandbox {
        self.sandbox
    }

    pub fn call(&mut self, request: &ToolRequest, stage: Option<StageId>, strategy: Option<StrategyId>) -> ToolResult {
        let started_ms = self.started.elapsed().as_millis() as u64;
        let result = invoke(request, self.sandbox);
        if request.tool == ToolKind::WriteFile && result.is_ok() {
            if let Some(path) = result.payload.get("path").and_then(Value::as_str) {
                self.modified.insert(path.to_string());
            }
        }
        self.raw.push(RawTraceEntry {
            stage_id: stage,
            tool: request.tool,
            args: trace_args(request, &result),
            status: result.status,
            strategy_id: strategy,
            started_ms: Some(started_ms),
            duration_ms: Some(result.duration_ms),
        });
        result
    }

    /// Records an invocation performed outside `invoke`, such as a harness
    /// test execution.
    pub fn note(&mut self, stage: Option<StageId>, tool: ToolKind, args: Value, status: ToolStatus) {
        self.raw.push(RawTraceEntry {
            stage_id: stage,
            tool,
            args,
            status,
            strategy_id: None,
            started_ms: Some(self.started.elapsed().as_millis() as u64),
            duration_ms: None,
        });
    }

    pub fn modified(&self) -> &BTreeSet<String> {
        &self.modified
    }

    pub fn raw(&self) -> &RawTrace {
        &self.raw
    }
}

/// Arguments as they enter the trace. File contents and stdin are reduced
/// to digests; rejected requests are kept verbatim as an opaque string so
/// a hostile path never has to be relativized.
fn trace_args(request: &ToolRequest, result: &ToolResult) -> Value {
    if matches!(result.status, ToolStatus::Error(ToolErrorCode::PathEscape | ToolErrorCode::BadArgs)) {
        let raw = String::from_utf8_lossy(&canonical_json_bytes(&Value::Object(request.args.clone()))).into_owned();
        return json!({ "rejected": raw });
    }
    let mut args = request.args.clone();
    for key in ["content", "stdin"] {
        if let Some(text) = args.remove(key) {
            let text = text.as_str().unwrap_or_default().to_string();
            args.insert(format!("{key}_sha256"), json!(sha256_hex(text.as_bytes())));
            args.insert(format!("{key}_len"), json!(text.len()));
        }
    }
    if request.tool == ToolKind::WebScrape {
        if let Some(h) = result.payload.get("body_sha256") {
            args.insert("body_sha256".into(), h.clone());
        }
    }
    Value::Object(args)
}

/// Renders a tool result for the model, clipped to `limit` bytes per stream.
pub fn render_tool_result(request: &ToolRequest, result: &ToolResult, limit: usize) -> String {
    let clip = |b: &[u8]| {
        let text = String::from_utf8_lossy(&b[..b.len().min(limit)]).into_owned();
        if b.len() > limit {
            format!("{text}\n[... {} more bytes]", b.len() - limit)
        } else {
            text
        }
    };
    let status = match result.status {
        ToolStatus::Ok => "OK".to_string(),
        ToolStatus::Error(code) => format!("ERROR {}", serde_json::to_value(code).expect("codes serialize")),
    };
    let mut out = format!("{} {status}", request.tool.name());
    if let Some(code) = result.exit_code {
        out.push_str(&format!(" exit={code}"));
    }
    if !result.stdout.is_empty() {
        out.push_str(&format!("\n--- stdout ---\n{}", clip(&result.stdout)));
    }
    if !result.stderr.is_empty() {
        out.push_str(&format!("\n--- stderr ---\n{}", clip(&result.stderr)));
    }
    out
}

/// Creates the workspace and copies the legacy source into it.
fn prepare_workspace(inputs: &RunInputs<'_>) -> std::io::Result<(Sandbox, String, String)> {
    let config = inputs.config;
    let mut sandbox = Sandbox::with_policy(
        inputs.workspace,
        &config.sandbox,
        Duration::from_secs(config.limits.command_timeout_secs),
        config.seed,
    )?;
    sandbox.web_fixtures = inputs.web_fixtures.map(Path::to_path_buf);
    let source = inputs.suite_dir.join(&inputs.program.source_path);
    let name = source.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "source.cbl".into());
    let text = fs::read(&source).map(|b| String::from_utf8_lossy(&b).into_owned())?;
    fs::write(sandbox.root().join(&name), &text)?;
    Ok((sandbox, name, text))
}

/// Conversation state and metering shared by both engines.
struct Session<'a, 's> {
    inputs: &'a RunInputs<'a>,
    recorder: Recorder<'s>,
    client: ModelClient<'a>,
    messages: Vec<Message>,
    bundle: PromptBundle,
}

enum AskError {
    Budget,
    Gateway,
}

impl<'a, 's> Session<'a, 's> {
    fn new(
        inputs: &'a RunInputs<'a>,
        sandbox: &'s Sandbox,
        backend: &'a dyn Backend,
        source_name: &str,
        source_text: &str,
    ) -> Self {
        let config = inputs.config;
        let bundle = PromptBundle::lookup(&config.prompts)
            .or_else(|| PromptBundle::lookup(BUILTIN_BUNDLE))
            .expect("built-in bundle exists");
        let messages = vec![
            Message::new(Role::System, bundle.system.clone()),
            Message::new(Role::User, bundle.task(inputs.program, source_name, source_text, &config.harness.output_dir)),
        ];
        Self {
            inputs,
            recorder: Recorder::new(
                sandbox,
                &run_id(&inputs.program.id, config.mode, inputs.run_index),
                &config.fingerprint(),
            ),
            client: ModelClient::new(backend, config.backend.model_id(), inputs.retry),
            messages,
            bundle,
        }
    }

    fn prompt_estimate(&self) -> u64 {
        self.messages.iter().map(|m| estimate_tokens(&m.content)).sum()
    }

    /// One model call against the remaining budget `spent` leaves. On
    /// success the assistant turn is appended to the conversation.
    fn ask(&mut self, spent: u64) -> Result<(ModelAction, TokenUsage), AskError> {
        let budget = self.inputs.config.token_budget;
        let remaining = budget.saturating_sub(spent);
        let prompt = self.prompt_estimate();
        if prompt >= remaining {
            return Err(AskError::Budget);
        }
        let request = ModelRequest {
            prompt_bundle_id: self.bundle.id.clone(),
            messages: self.messages.clone(),
            temperature: self.inputs.config.limits.temperature.clone(),
            seed: self.inputs.config.seed,
            max_completion_tokens: Some(remaining - prompt),
        };
        let response = self.client.complete(&request).map_err(|_| AskError::Gateway)?;
        if spent + response.usage.total() > budget {
            return Err(AskError::Budget);
        }
        self.messages
            .push(Message::new(Role::Assistant, serde_json::to_string(&response.action).expect("actions serialize")));
        Ok((response.action, response.usage))
    }

    fn push_user(&mut self, text: String) {
        self.messages.push(Message::new(Role::User, text));
    }

    fn push_tool_result(&mut self, text: String) {
        self.messages.push(Message::new(Role::ToolResult, text));
    }

    /// Executes every test once, tracing each execution as a RUN_COMMAND.
    fn evaluate(&mut self, stage: Option<StageId>) -> Result<TestEvaluation, HarnessError> {
        let inputs = self.inputs;
        let config = inputs.config;
        let spec = ExecutableSpec::target(&config.harness, &inputs.program.target_path);
        let timeout = Duration::from_secs(config.limits.test_timeout_secs);
        let mut outcomes = Vec::with_capacity(inputs.program.tests.len());
        for test in &inputs.program.tests {
            let argv = spec.argv(test);
            let args = json!({ "argv": argv, "test_id": test.id });
            match execute_program(&spec, test, self.recorder.sandbox(), timeout) {
                Ok(outcome) => {
                    let status = if outcome.timed_out {
                        ToolStatus::Error(ToolErrorCode::Timeout)
                    } else if outcome.exit_code != 0 {
                        ToolStatus::Error(ToolErrorCode::ExitNonzero)
                    } else {
                        ToolStatus::Ok
                    };
                    self.recorder.note(stage, ToolKind::RunCommand, args, status);
                    outcomes.push(outcome);
                }
                Err(e) => {
                    let code = match e {
                        HarnessError::MissingExecutable(_) => ToolErrorCode::NotFound,
                        _ => ToolErrorCode::Io,
                    };
                    self.recorder.note(stage, ToolKind::RunCommand, args, ToolStatus::Error(code));
                    return Err(e);
                }
            }
        }
        score(
            &inputs.program.tests,
            &outcomes,
            inputs.references,
            &config.harness.normalization,
            config.limits.reprompt_stderr_limit,
        )
    }
}

/// Failure class implied by a completed test evaluation.
fn classify_evaluation(eval: &TestEvaluation) -> Option<FailureClass> {
    if eval.any_timeout {
        Some(FailureClass::Timeout)
    } else if eval.runtime_error {
        Some(FailureClass::RuntimeError)
    } else if !eval.ca.is_one() {
        Some(FailureClass::TestFail)
    } else {
        None
    }
}

struct Assembled {
    stage_outcomes: std::collections::BTreeMap<StageId, StageOutcome>,
    evaluation: Option<TestEvaluation>,
    executed: bool,
    error: Option<FailureClass>,
    agentic: Option<AgenticSummary>,
}

fn assemble(
    inputs: &RunInputs<'_>,
    raw: &RawTrace,
    tokens: RunTokens,
    started: Instant,
    parts: Assembled,
) -> RunRecord {
    let mut error = parts.error;
    let trace = canonicalize(raw).unwrap_or_else(|e| {
        // A path that cannot be relativized means confinement was bypassed;
        // keep the run but mark it.
        error = error.or(Some(FailureClass::ToolError));
        let mut empty = raw.clone();
        empty.entries.clear();
        let mut t = canonicalize(&empty).expect("empty trace canonicalizes");
        t.run_id = format!("{} ({e})", t.run_id);
        t
    });
    let trace_hash = trace_hash(&trace).expect("canonical trace hashes");
    let ca = parts.evaluation.as_ref().map(|e| e.ca.clone());
    let (tests_passed, tests_total) =
        parts.evaluation.as_ref().map_or((0, inputs.program.tests.len() as u64), |e| (e.passed(), e.total()));
    let successful = error.is_none() && ca.as_ref().is_some_and(Rational::is_one);
    RunRecord {
        schema_version: SCHEMA_VERSION.into(),
        program_id: inputs.program.id.clone(),
        category: inputs.program.category,
        run_index: inputs.run_index,
        config: inputs.config.clone(),
        trace,
        trace_hash,
        stage_outcomes: parts.stage_outcomes,
        token_ledger: tokens,
        ca,
        tests_passed,
        tests_total,
        executed: parts.executed,
        successful,
        wall_time_ms: started.elapsed().as_millis() as u64,
        error,
        agentic: parts.agentic,
    }
}

/// Record for a run whose workspace could not even be prepared.
fn setup_failure(inputs: &RunInputs<'_>, started: Instant, message: &str) -> RunOutput {
    let raw = RawTrace::new(
        format!("{} (setup failed: {message})", run_id(&inputs.program.id, inputs.config.mode, inputs.run_index)),
        inputs.config.fingerprint(),
        "",
    );
    let tokens = RunTokens { model_id: inputs.config.backend.model_id().into(), ..RunTokens::default() };
    let record = assemble(
        inputs,
        &raw,
        tokens,
        started,
        Assembled {
            stage_outcomes: Default::default(),
            evaluation: None,
            executed: false,
            error: Some(FailureClass::ToolError),
            agentic: None,
        },
    );
    RunOutput { record, transcript: Vec::new() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_args_hide_contents_and_rejected_paths() {
        let req = ToolRequest::write_file("a.py", "print(1)\n");
        let ok = ToolResult {
            status: ToolStatus::Ok,
            stdout: Default::default(),
            stderr: Default::default(),
            exit_code: None,
            payload: Value::Null,
            duration_ms: 3,
        };
        let args = trace_args(&req, &ok);
        assert_eq!(args["content_len"], 9);
        assert!(args.get("content").is_none());
        let escaped = ToolResult { status: ToolStatus::Error(ToolErrorCode::PathEscape), ..ok };
        let args = trace_args(&ToolRequest::read_file("/etc/passwd"), &escaped);
        assert_eq!(args, json!({ "rejected": "{\"path\":\"/etc/passwd\"}" }));
    }
}
