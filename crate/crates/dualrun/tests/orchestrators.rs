mod common;

use std::cell::RefCell;
use std::fs;

use proptest::prelude::*;

use common::Fixture;
use dualrun::gateway::{Backend, BackendError, Condition, Script, ScriptedBackend};
use dualrun::orchestrate::{apply_with_fallback, EditStrategy, Recorder};
use dualrun::sandbox::Sandbox;
use dualrun_core::compare::is_successful_run;
use dualrun_core::llm::{FileEdit, ModelAction, ModelRequest, ModelResponse};
use dualrun_core::model::{FailureClass, Mode, StageId, StageOutcome, StrategyId, TerminationReason};
use dualrun_core::tool::{ToolErrorCode, ToolKind, ToolRequest, ToolStatus};
use dualrun_core::trace::{divergence_point, skeleton};

fn whole_file(content: &str) -> ModelAction {
    ModelAction::CodeEdit {
        edits: vec![FileEdit { path: "translated.py".into(), search: None, content: content.into() }],
    }
}

fn apply_directive() -> Condition {
    Condition { last_message_contains: Some("STAGE:".into()), ..Condition::default() }
}

#[test]
fn deterministic_scripted_runs_share_one_trace() {
    let fx = Fixture::new();
    let (config, backend) = fx.scripted();
    let first = fx.run("NC103", &config, Mode::Deterministic, 0, backend.as_ref()).record;
    assert!(first.successful, "{:?}", first.error);
    for idx in 1..50 {
        let r = fx.run("NC103", &config, Mode::Deterministic, idx, backend.as_ref()).record;
        assert_eq!(
            r.trace_hash,
            first.trace_hash,
            "run {idx} diverged at {:?}",
            divergence_point(&first.trace, &r.trace)
        );
    }
}

#[test]
fn rejected_action_is_reprompted_within_the_retry_budget() {
    let fx = Fixture::new();
    let (config, backend) = fx.scripted();
    let out = fx.run("SQ101", &config, Mode::Deterministic, 0, backend.as_ref());
    assert!(out.record.successful);
    assert_eq!(out.record.token_ledger.calls, 2);
    let second = &out.transcript[1].request;
    assert!(second.last_message().content.to_text().starts_with("STAGE: APPLY REJECTED"));

    let mut strict = config.clone();
    strict.limits.max_retries = 0;
    let r = fx.run("SQ101", &strict, Mode::Deterministic, 0, backend.as_ref()).record;
    assert_eq!(r.stage_outcomes[&StageId::Apply], StageOutcome::Failed);
    assert_eq!(r.stage_outcomes[&StageId::Persist], StageOutcome::Skipped);
    assert_eq!(r.error, Some(FailureClass::ToolError));
    assert!(!r.successful);
}

#[test]
fn cooperative_scripts_share_a_skeleton() {
    let fx = Fixture::new();
    let (config, _) = fx.scripted();
    let dir = fx.suite_dir().join("programs/NC101");
    let a = fs::read_to_string(dir.join("correct.py")).unwrap();
    let b = fs::read_to_string(dir.join("reference.py")).unwrap();
    let backend =
        |content: &str| ScriptedBackend::new(Script::new(vec![]).with_rule(apply_directive(), whole_file(content)));
    let ra = fx.run("NC101", &config, Mode::Deterministic, 0, &backend(&a)).record;
    let rb = fx.run("NC101", &config, Mode::Deterministic, 0, &backend(&b)).record;
    assert!(ra.successful && rb.successful);
    assert_eq!(skeleton(&ra.trace), skeleton(&rb.trace));
    // Only the written content differs.
    assert_ne!(ra.trace_hash, rb.trace_hash);
    assert_eq!(divergence_point(&ra.trace, &rb.trace), Some(0));
}

#[test]
fn agentic_trace_mirrors_the_script() {
    let fx = Fixture::new();
    let (config, backend) = fx.scripted();
    let r = fx.run("SQ101", &config, Mode::Agentic, 0, backend.as_ref()).record;
    let tools: Vec<ToolKind> = r.trace.entries.iter().map(|e| e.tool).collect();
    // LIST, READ, edit, GIT, FINISH; then one execution per test.
    let mut expected = vec![ToolKind::ListFiles, ToolKind::ReadFile, ToolKind::WriteFile, ToolKind::Git];
    expected.extend(std::iter::repeat_n(ToolKind::RunCommand, r.tests_total as usize));
    assert_eq!(tools, expected);
    assert!(r.trace.entries.iter().all(|e| e.stage_id.is_none()));
    assert_eq!(r.trace.entries[2].strategy_id, Some(StrategyId::WholeFileRewrite));
    let summary = r.agentic.unwrap();
    assert_eq!(summary.termination_reason, TerminationReason::ModelFinish);
    assert_eq!(summary.step_count, 5);
    assert!(r.successful);
}

#[test]
fn zero_step_limit_makes_no_model_calls() {
    let fx = Fixture::new();
    let (mut config, backend) = fx.scripted();
    config.max_agentic_steps = 0;
    let r = fx.run("NC101", &config, Mode::Agentic, 0, backend.as_ref()).record;
    let summary = r.agentic.unwrap();
    assert_eq!(summary.step_count, 0);
    assert_eq!(summary.termination_reason, TerminationReason::StepLimit);
    assert_eq!(r.token_ledger.calls, 0);
    assert!(r.trace.entries.is_empty());
    assert_eq!(r.error, Some(FailureClass::BudgetExhausted));
    assert_eq!(r.ca, None);
}

#[test]
fn token_budget_wins_a_tie_with_the_step_limit() {
    let fx = Fixture::new();
    let (mut config, backend) = fx.scripted();
    config.max_agentic_steps = 0;
    config.token_budget = 10;
    let r = fx.run("NC101", &config, Mode::Agentic, 0, backend.as_ref()).record;
    assert_eq!(r.agentic.unwrap().termination_reason, TerminationReason::TokenBudget);
    assert_eq!(r.error, Some(FailureClass::BudgetExhausted));

    // The same budget also bounds deterministic runs.
    let d = fx.run("NC101", &config, Mode::Deterministic, 0, backend.as_ref()).record;
    assert_eq!(d.error, Some(FailureClass::BudgetExhausted));
    assert_eq!(d.token_ledger.calls, 0);
}

#[test]
fn repeated_failing_tool_request_is_fatal() {
    let fx = Fixture::new();
    let (config, _) = fx.scripted();
    let read = ModelAction::ToolAction { request: ToolRequest::read_file("missing.txt") };
    let backend = ScriptedBackend::new(Script::new(vec![read]));
    let r = fx.run("NC101", &config, Mode::Agentic, 0, &backend).record;
    let summary = r.agentic.unwrap();
    assert_eq!(summary.termination_reason, TerminationReason::FatalToolError);
    assert_eq!(summary.step_count, 3);
    assert_eq!(r.error, Some(FailureClass::ToolError));
    assert!(r.trace.entries.iter().all(|e| e.status == ToolStatus::Error(ToolErrorCode::NotFound)));
}

#[test]
fn validation_failure_is_repaired() {
    let fx = Fixture::new();
    let (config, backend) = fx.scripted();
    let r = fx.run("IF102", &config, Mode::Deterministic, 0, backend.as_ref()).record;
    assert!(r.successful);
    let validate: Vec<_> = r.trace.entries.iter().filter(|e| e.stage_id == Some(StageId::Validate)).collect();
    assert_eq!(validate[0].tool, ToolKind::RunCommand);
    assert_eq!(validate[0].status, ToolStatus::Error(ToolErrorCode::ExitNonzero));
    assert!(validate.iter().any(|e| e.tool == ToolKind::WriteFile));
    assert_eq!(validate.last().unwrap().status, ToolStatus::Ok);

    let mut no_repair = config.clone();
    no_repair.limits.max_retries = 0;
    let r = fx.run("IF102", &no_repair, Mode::Deterministic, 0, backend.as_ref()).record;
    assert_eq!(r.stage_outcomes[&StageId::Validate], StageOutcome::Failed);
    assert_eq!(r.error, Some(FailureClass::CompileFail));
    // TEST still runs against the broken file.
    assert!(r.executed);
}

#[test]
fn inapplicable_exact_patch_falls_back_to_rewrite() {
    let fx = Fixture::new();
    let (config, backend) = fx.scripted();
    let r = fx.run("IC102", &config, Mode::Deterministic, 0, backend.as_ref()).record;
    assert!(r.successful, "{:?}", r.error);
    let repair: Vec<_> = r
        .trace
        .entries
        .iter()
        .filter(|e| e.stage_id == Some(StageId::Test) && e.strategy_id.is_some())
        .map(|e| (e.tool, e.strategy_id.unwrap()))
        .collect();
    assert_eq!(
        repair,
        vec![
            (ToolKind::ReadFile, StrategyId::ExactPatch),
            (ToolKind::ReadFile, StrategyId::WholeFileRewrite),
            (ToolKind::WriteFile, StrategyId::WholeFileRewrite),
        ]
    );
}

struct Down;

impl Backend for Down {
    fn complete(&self, _: &ModelRequest) -> Result<ModelResponse, BackendError> {
        Err(BackendError::Transport("connection refused".into()))
    }
}

#[test]
fn unreachable_backend_fails_the_run_without_aborting() {
    let fx = Fixture::new();
    let (config, _) = fx.scripted();
    let out = fx.run("NC101", &config, Mode::Deterministic, 0, &Down);
    assert_eq!(out.record.error, Some(FailureClass::ToolError));
    assert!(!is_successful_run(&out.record));
    assert_eq!(out.transcript.len(), 3);
    let a = fx.run("NC101", &config, Mode::Agentic, 0, &Down).record;
    assert_eq!(a.agentic.unwrap().termination_reason, TerminationReason::FatalToolError);
}

/// Succeeds or not according to a fixed mask and logs its invocation.
struct Masked<'a> {
    index: usize,
    succeeds: bool,
    log: &'a RefCell<Vec<usize>>,
}

impl EditStrategy for Masked<'_> {
    fn id(&self) -> StrategyId {
        StrategyId::ExactPatch
    }

    fn apply(&self, _: &[FileEdit], _: &mut Recorder<'_>, _: Option<StageId>) -> bool {
        self.log.borrow_mut().push(self.index);
        self.succeeds
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn fallback_stops_at_the_first_success(mask in proptest::collection::vec(any::<bool>(), 0..8)) {
        let dir = tempfile::tempdir().unwrap();
        let sandbox = Sandbox::new(dir.path()).unwrap();
        let mut recorder = Recorder::new(&sandbox, "r", "f");
        let log = RefCell::new(Vec::new());
        let strategies: Vec<Masked> =
            mask.iter().enumerate().map(|(index, &succeeds)| Masked { index, succeeds, log: &log }).collect();
        let refs: Vec<&dyn EditStrategy> = strategies.iter().map(|s| s as &dyn EditStrategy).collect();
        let r = apply_with_fallback(&refs, &[], &mut recorder, None);
        let first = mask.iter().position(|&m| m);
        prop_assert_eq!(r.chosen, first);
        let tried = first.map_or(mask.len(), |i| i + 1);
        prop_assert_eq!(log.into_inner(), (0..tried).collect::<Vec<_>>());
        prop_assert_eq!(r.attempted, tried);
        prop_assert_eq!(r.outcome == StageOutcome::Passed, first.is_some());
        prop_assert!(recorder.raw().entries.is_empty());
    }
}

#[test]
fn stage_directives_are_the_only_prompts_the_pipeline_adds() {
    let fx = Fixture::new();
    let (config, backend) = fx.scripted();
    let out = fx.run("NC103", &config, Mode::Deterministic, 0, backend.as_ref());
    let request = &out.transcript.last().unwrap().request;
    let users: Vec<String> = request
        .messages
        .iter()
        .skip(2)
        .filter(|m| m.role == dualrun_core::llm::Role::User)
        .map(|m| m.content.to_text())
        .collect();
    assert!(users.iter().all(|u| u.starts_with("STAGE: ")), "{users:?}");
    assert!(users[1].starts_with("STAGE: TEST FAILED"));
}
