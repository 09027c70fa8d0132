//! The fixed APPLY, PERSIST, VALIDATE, TEST pipeline. The model is asked
//! only for edits; every tool call here is issued by the pipeline itself.

use std::time::{Duration, Instant};

use dualrun_core::llm::ModelAction;
use dualrun_core::model::{FailureClass, StageId, StageOutcome, SystemState};
use dualrun_core::plan::{build_stage_plan, evaluate_gate};
use dualrun_core::tool::ToolRequest;

use super::apply::{apply_with_fallback, builtin_strategy, EditStrategy};
use super::{
    assemble, classify_evaluation, prepare_workspace, setup_failure, AskError, Assembled, RunInputs, RunOutput, Session,
};
use crate::gateway::Backend;
use crate::harness::TestEvaluation;

enum EditOutcome {
    Applied,
    Exhausted,
    Budget,
    Gateway,
    Deadline,
}

/// Sends `prompt`, applies a returned CODE_EDIT, and re-prompts on a
/// rejected or inapplicable reply, for at most `attempts` model calls.
fn request_edit(
    session: &mut Session<'_, '_>,
    stage: StageId,
    strategies: &[&dyn EditStrategy],
    mut prompt: String,
    attempts: u32,
    spent: &mut u64,
    deadline: Instant,
) -> EditOutcome {
    for _ in 0..attempts {
        if Instant::now() >= deadline {
            return EditOutcome::Deadline;
        }
        session.push_user(prompt);
        let action = match session.ask(*spent) {
            Ok((action, used)) => {
                *spent += used.total();
                action
            }
            Err(AskError::Budget) => return EditOutcome::Budget,
            Err(AskError::Gateway) => return EditOutcome::Gateway,
        };
        prompt = match action {
            ModelAction::CodeEdit { edits } => {
                let r = apply_with_fallback(strategies, &edits, &mut session.recorder, Some(stage));
                if r.outcome == StageOutcome::Passed {
                    return EditOutcome::Applied;
                }
                format!(
                    "STAGE: {stage} FAILED\nThe edits could not be applied. Every `search` text must occur in the \
                     current file; otherwise send the complete file content."
                )
            }
            other => format!(
                "STAGE: {stage} REJECTED\nOnly a CODE_EDIT action is accepted at this stage; got {}.",
                other.kind_name()
            ),
        };
    }
    EditOutcome::Exhausted
}

/// Failure raised by the run so far; the first one recorded wins.
#[derive(Default)]
struct Failures {
    first: Option<FailureClass>,
    budget: bool,
    deadline: bool,
}

impl Failures {
    fn raise(&mut self, class: FailureClass) {
        self.first.get_or_insert(class);
    }

    fn absorb(&mut self, outcome: &EditOutcome) {
        match outcome {
            EditOutcome::Budget => self.budget = true,
            EditOutcome::Gateway => self.raise(FailureClass::ToolError),
            EditOutcome::Deadline => self.deadline = true,
            EditOutcome::Applied | EditOutcome::Exhausted => {}
        }
    }

    fn stop(&self) -> bool {
        self.budget || self.deadline || self.first.is_some()
    }
}

pub fn run_deterministic(inputs: &RunInputs<'_>, backend: &dyn Backend) -> RunOutput {
    let started = Instant::now();
    let config = inputs.config;
    let (sandbox, source_name, source_text) = match prepare_workspace(inputs) {
        Ok(v) => v,
        Err(e) => return setup_failure(inputs, started, &e.to_string()),
    };
    let plan = match build_stage_plan(config) {
        Ok(p) => p,
        Err(e) => return setup_failure(inputs, started, &e.to_string()),
    };
    let deadline = started + Duration::from_secs(plan.global_timeout_secs);
    let mut session = Session::new(inputs, &sandbox, backend, &source_name, &source_text);
    let mut state = SystemState::new(sandbox.root().to_string_lossy());
    let mut spent = 0u64;
    let mut failures = Failures::default();
    let mut apply_passed = false;
    let mut validate_failed = false;
    let mut evaluation: Option<TestEvaluation> = None;
    let mut executed = false;
    let target = inputs.program.target_path.clone();
    // Repairs in later stages use APPLY's strategy list.
    let repair: Vec<&dyn EditStrategy> = plan.stages[0].strategies.iter().map(|s| builtin_strategy(*s)).collect();

    for stage in &plan.stages {
        let strategies: Vec<&dyn EditStrategy> = stage.strategies.iter().map(|s| builtin_strategy(*s)).collect();
        for path in session.recorder.modified() {
            state.record_modified(path.clone());
        }
        if Instant::now() >= deadline {
            failures.deadline = true;
        }
        let open = !failures.deadline && evaluate_gate(&stage.gate, &state, config).unwrap_or(false);
        if !open {
            let _ = state.record_outcome(stage.id, StageOutcome::Skipped);
            continue;
        }
        let attempts = 1 + stage.max_retries;
        let outcome = match stage.id {
            StageId::Apply => {
                let prompt = format!(
                    "STAGE: APPLY\nReply with a CODE_EDIT that writes the complete Python translation to `{target}`."
                );
                let r = request_edit(&mut session, StageId::Apply, &strategies, prompt, attempts, &mut spent, deadline);
                failures.absorb(&r);
                apply_passed = matches!(r, EditOutcome::Applied);
                if !apply_passed && !failures.budget && !failures.deadline {
                    failures.raise(FailureClass::ToolError);
                }
                if apply_passed {
                    StageOutcome::Passed
                } else {
                    StageOutcome::Failed
                }
            }
            StageId::Persist => {
                let message = format!("apply translation for {}", inputs.program.id);
                let commands: [&[&str]; 3] = [&["init", "-q"], &["add", "-A"], &["commit", "-q", "-m", &message]];
                let ok = commands.iter().all(|args| {
                    (0..attempts)
                        .any(|_| session.recorder.call(&ToolRequest::git(args), Some(StageId::Persist), None).is_ok())
                });
                if ok {
                    StageOutcome::Passed
                } else {
                    StageOutcome::Failed
                }
            }
            StageId::Validate => {
                let mut remaining_repairs = if apply_passed { stage.max_retries } else { 0 };
                loop {
                    let failure = validate_files(&mut session, &config.harness.validate_command);
                    let Some(stderr) = failure else { break StageOutcome::Passed };
                    if remaining_repairs == 0 || failures.stop() {
                        validate_failed = true;
                        break StageOutcome::Failed;
                    }
                    remaining_repairs -= 1;
                    let prompt = format!(
                        "STAGE: VALIDATE FAILED\n{stderr}\nReply with a CODE_EDIT that fixes the syntax error."
                    );
                    let r = request_edit(&mut session, StageId::Validate, &repair, prompt, 1, &mut spent, deadline);
                    failures.absorb(&r);
                }
            }
            StageId::Test => {
                let mut remaining_repairs = stage.max_retries;
                loop {
                    match session.evaluate(Some(StageId::Test)) {
                        Ok(eval) => {
                            executed = true;
                            let failure = eval.first_failure.clone();
                            let pass = eval.ca.is_one();
                            evaluation = Some(eval);
                            if pass {
                                break StageOutcome::Passed;
                            }
                            if remaining_repairs == 0 || !apply_passed || failures.stop() {
                                break StageOutcome::Failed;
                            }
                            remaining_repairs -= 1;
                            let prompt = format!(
                                "STAGE: TEST FAILED\n{}\nReply with a CODE_EDIT that fixes the translation.",
                                failure.unwrap_or_default()
                            );
                            let r = request_edit(&mut session, StageId::Test, &repair, prompt, 1, &mut spent, deadline);
                            failures.absorb(&r);
                        }
                        // The translation is missing or the harness broke.
                        Err(_) => {
                            break StageOutcome::Failed;
                        }
                    }
                }
            }
        };
        state.record_outcome(stage.id, outcome).expect("each stage runs once");
    }

    let error = failures
        .first
        .or(failures.budget.then_some(FailureClass::BudgetExhausted))
        .or(failures.deadline.then_some(FailureClass::Timeout))
        .or(validate_failed.then_some(FailureClass::CompileFail))
        .or_else(|| match &evaluation {
            Some(e) => classify_evaluation(e),
            None if config.flag(dualrun_core::model::FLAG_TEST).unwrap_or(false) => Some(FailureClass::TestFail),
            None => None,
        });
    let raw = session.recorder.raw().clone();
    let (tokens, transcript) = session.client.into_parts();
    let record = assemble(
        inputs,
        &raw,
        tokens,
        started,
        Assembled { stage_outcomes: state.stage_outcomes, evaluation, executed, error, agentic: None },
    );
    RunOutput { record, transcript }
}

/// Runs the validation command on every modified Python file. Returns the
/// first failure's stderr, clipped to the re-prompt limit.
fn validate_files(session: &mut Session<'_, '_>, command: &[String]) -> Option<String> {
    let files: Vec<String> = session.recorder.modified().iter().filter(|p| p.ends_with(".py")).cloned().collect();
    let limit = session.inputs.config.limits.reprompt_stderr_limit;
    for file in files {
        let argv: Vec<String> = command.iter().map(|part| part.replace("{file}", &file)).collect();
        let argv: Vec<&str> = argv.iter().map(String::as_str).collect();
        let r = session.recorder.call(&ToolRequest::run_command(&argv), Some(StageId::Validate), None);
        if !r.is_ok() {
            let stderr = r.stderr.as_slice();
            let mut text = String::from_utf8_lossy(&stderr[..stderr.len().min(limit)]).into_owned();
            if text.is_empty() {
                text = format!("{} failed", file);
            }
            return Some(text);
        }
    }
    None
}
