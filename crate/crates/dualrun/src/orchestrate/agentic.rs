//! The model-controlled loop: each step is one model call whose action is
//! executed as is. Stages do not exist here.

use std::time::{Duration, Instant};

use dualrun_core::llm::{ModelAction, TokenUsage};
use dualrun_core::model::{AgenticSummary, FailureClass, StageOutcome, TerminationReason, FLAG_TEST};
use dualrun_core::tool::ToolRequest;

use super::apply::{apply_with_fallback, EditStrategy, ExactPatch, WholeFileRewrite};
use super::{
    assemble, classify_evaluation, prepare_workspace, render_tool_result, setup_failure, AskError, Assembled,
    RunInputs, RunOutput, Session,
};
use crate::gateway::Backend;

/// A tool request failing this many times in a row ends the run.
const FATAL_REPEATS: u32 = 3;

pub fn run_agentic(inputs: &RunInputs<'_>, backend: &dyn Backend) -> RunOutput {
    let started = Instant::now();
    let config = inputs.config;
    let (sandbox, source_name, source_text) = match prepare_workspace(inputs) {
        Ok(v) => v,
        Err(e) => return setup_failure(inputs, started, &e.to_string()),
    };
    let deadline = started + Duration::from_secs(config.limits.global_timeout_secs);
    let strategies: [&dyn EditStrategy; 2] = [&ExactPatch, &WholeFileRewrite];
    let limit = config.limits.tool_result_limit;
    let mut session = Session::new(inputs, &sandbox, backend, &source_name, &source_text);
    let mut steps = 0u32;
    let mut accepted = TokenUsage::default();
    let mut repeated: Option<(ToolRequest, u32)> = None;
    let mut evaluation = None;
    let mut executed = false;
    let mut error = None;

    let termination = loop {
        if Instant::now() >= deadline {
            error = Some(FailureClass::Timeout);
            break TerminationReason::StepLimit;
        }
        // The token budget is checked first, so it wins a tie with the
        // step limit.
        if session.prompt_estimate() >= config.token_budget.saturating_sub(accepted.total()) {
            break TerminationReason::TokenBudget;
        }
        if steps >= config.max_agentic_steps {
            break TerminationReason::StepLimit;
        }
        let action = match session.ask(accepted.total()) {
            Ok((action, usage)) => {
                accepted += usage;
                action
            }
            Err(AskError::Budget) => break TerminationReason::TokenBudget,
            Err(AskError::Gateway) => {
                error = Some(FailureClass::ToolError);
                break TerminationReason::FatalToolError;
            }
        };
        steps += 1;
        match action {
            ModelAction::ToolAction { request } => {
                let result = session.recorder.call(&request, None, None);
                session.push_tool_result(render_tool_result(&request, &result, limit));
                if result.is_ok() {
                    repeated = None;
                    continue;
                }
                let count = match repeated.take() {
                    Some((prev, n)) if prev == request => n + 1,
                    _ => 1,
                };
                if count >= FATAL_REPEATS {
                    error = Some(FailureClass::ToolError);
                    break TerminationReason::FatalToolError;
                }
                repeated = Some((request, count));
            }
            ModelAction::CodeEdit { edits } => {
                repeated = None;
                let r = apply_with_fallback(&strategies, &edits, &mut session.recorder, None);
                let text = match (r.outcome, r.strategy) {
                    (StageOutcome::Passed, Some(s)) => {
                        let s = serde_json::to_value(s).expect("strategy ids serialize");
                        format!("CODE_EDIT OK via {}", s.as_str().unwrap_or_default())
                    }
                    _ => "CODE_EDIT FAILED: no strategy could apply the edits".to_string(),
                };
                session.push_tool_result(text);
            }
            ModelAction::Finish { .. } => {
                if config.flag(FLAG_TEST).unwrap_or(false) {
                    match session.evaluate(None) {
                        Ok(eval) => {
                            executed = true;
                            error = classify_evaluation(&eval);
                            evaluation = Some(eval);
                        }
                        Err(_) => error = Some(FailureClass::TestFail),
                    }
                }
                break TerminationReason::ModelFinish;
            }
        }
    };
    if matches!(termination, TerminationReason::StepLimit | TerminationReason::TokenBudget) && error.is_none() {
        error = Some(FailureClass::BudgetExhausted);
    }

    let raw = session.recorder.raw().clone();
    let (tokens, transcript) = session.client.into_parts();
    let summary = AgenticSummary { step_count: steps, tokens_spent: accepted, termination_reason: termination };
    let record = assemble(
        inputs,
        &raw,
        tokens,
        started,
        Assembled { stage_outcomes: Default::default(), evaluation, executed, error, agentic: Some(summary) },
    );
    RunOutput { record, transcript }
}
