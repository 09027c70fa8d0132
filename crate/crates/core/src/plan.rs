//! The fixed deterministic stage pipeline and its gate predicates.

use alloc::vec;

use crate::error::{CoreError, Result};
use crate::model::{
    GatePredicate, Mode, RunConfig, Stage, StageId, StagePlan, StrategyId, SystemState, FLAG_PERSIST, FLAG_TEST,
    FLAG_VALIDATE,
};

/// Builds APPLY, PERSIST, VALIDATE, TEST in that order.
///
/// APPLY always runs; PERSIST needs `enable_persist` and at least one
/// modified file; VALIDATE and TEST are flag-gated. Disabled stages stay in
/// the plan and evaluate to SKIPPED at run time.
pub fn build_stage_plan(config: &RunConfig) -> Result<StagePlan> {
    if config.mode != Mode::Deterministic {
        return Err(CoreError::Config("stage plans exist only for DETERMINISTIC runs".into()));
    }
    let retries = config.limits.max_retries;
    if retries > config.limits.retry_ceiling {
        return Err(CoreError::Config("max_retries exceeds the configured ceiling".into()));
    }
    let flag = |name: &str| GatePredicate::FlagEnabled { flag: name.into() };
    let stage = |id, gate, strategies| Stage { id, gate, strategies, max_retries: retries };
    Ok(StagePlan {
        stages: vec![
            stage(StageId::Apply, GatePredicate::Always, vec![StrategyId::ExactPatch, StrategyId::WholeFileRewrite]),
            stage(
                StageId::Persist,
                GatePredicate::AllOf { children: vec![flag(FLAG_PERSIST), GatePredicate::FilesModified] },
                vec![],
            ),
            stage(StageId::Validate, flag(FLAG_VALIDATE), vec![]),
            stage(StageId::Test, flag(FLAG_TEST), vec![]),
        ],
        global_timeout_secs: config.limits.global_timeout_secs,
    })
}

/// Pure evaluation of a gate. Every child is evaluated (no short-circuit) so
/// an undeclared flag is reported regardless of sibling order.
pub fn evaluate_gate(gate: &GatePredicate, state: &SystemState, config: &RunConfig) -> Result<bool> {
    Ok(match gate {
        GatePredicate::Always => true,
        GatePredicate::FilesModified => !state.modified_files.is_empty(),
        GatePredicate::FlagEnabled { flag } => config.flag(flag)?,
        GatePredicate::AllOf { children } => {
            let mut all = true;
            for c in children {
                all &= evaluate_gate(c, state, config)?;
            }
            all
        }
        GatePredicate::AnyOf { children } => {
            let mut any = false;
            for c in children {
                any |= evaluate_gate(c, state, config)?;
            }
            any
        }
    })
}
