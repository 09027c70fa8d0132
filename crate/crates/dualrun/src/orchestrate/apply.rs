//! Edit-application strategies and the fixed-order fallback over them.

use dualrun_core::llm::FileEdit;
use dualrun_core::model::{StageId, StageOutcome, StrategyId};
use dualrun_core::tool::ToolRequest;

use super::Recorder;

pub trait EditStrategy {
    fn id(&self) -> StrategyId;
    /// Applies every edit or reports that the strategy does not apply.
    /// Tool calls made here are traced under `stage` and this strategy.
    fn apply(&self, edits: &[FileEdit], recorder: &mut Recorder<'_>, stage: Option<StageId>) -> bool;
}

/// Patch edits only: each `search` text must occur exactly once in the
/// current file.
pub struct ExactPatch;

/// Rewrites whole files: complete-content edits are written as given, and
/// patch edits replace every occurrence of `search` (at least one).
pub struct WholeFileRewrite;

fn read_text(recorder: &mut Recorder<'_>, path: &str, stage: Option<StageId>, strategy: StrategyId) -> Option<String> {
    let r = recorder.call(&ToolRequest::read_file(path), stage, Some(strategy));
    r.is_ok().then(|| r.stdout.to_text())
}

fn write_all(
    recorder: &mut Recorder<'_>,
    files: &[(String, String)],
    stage: Option<StageId>,
    strategy: StrategyId,
) -> bool {
    files.iter().all(|(path, text)| recorder.call(&ToolRequest::write_file(path, text), stage, Some(strategy)).is_ok())
}

impl EditStrategy for ExactPatch {
    fn id(&self) -> StrategyId {
        StrategyId::ExactPatch
    }

    fn apply(&self, edits: &[FileEdit], recorder: &mut Recorder<'_>, stage: Option<StageId>) -> bool {
        if edits.is_empty() || edits.iter().any(|e| e.search.is_none()) {
            return false;
        }
        let mut files = Vec::with_capacity(edits.len());
        for e in edits {
            let search = e.search.as_deref().unwrap_or_default();
            let Some(text) = read_text(recorder, &e.path, stage, self.id()) else { return false };
            if search.is_empty() || text.matches(search).count() != 1 {
                return false;
            }
            files.push((e.path.clone(), text.replacen(search, &e.content, 1)));
        }
        write_all(recorder, &files, stage, self.id())
    }
}

impl EditStrategy for WholeFileRewrite {
    fn id(&self) -> StrategyId {
        StrategyId::WholeFileRewrite
    }

    fn apply(&self, edits: &[FileEdit], recorder: &mut Recorder<'_>, stage: Option<StageId>) -> bool {
        if edits.is_empty() {
            return false;
        }
        let mut files = Vec::with_capacity(edits.len());
        for e in edits {
            match e.search.as_deref() {
                None => files.push((e.path.clone(), e.content.clone())),
                Some(search) => {
                    let Some(text) = read_text(recorder, &e.path, stage, self.id()) else { return false };
                    if search.is_empty() || !text.contains(search) {
                        return false;
                    }
                    files.push((e.path.clone(), text.replace(search, &e.content)));
                }
            }
        }
        write_all(recorder, &files, stage, self.id())
    }
}

pub fn builtin_strategy(id: StrategyId) -> &'static dyn EditStrategy {
    match id {
        StrategyId::ExactPatch => &ExactPatch,
        StrategyId::WholeFileRewrite => &WholeFileRewrite,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FallbackResult {
    pub outcome: StageOutcome,
    /// Index of the strategy that succeeded.
    pub chosen: Option<usize>,
    pub strategy: Option<StrategyId>,
    /// Strategies tried, including the successful one.
    pub attempted: usize,
}

/// Tries `strategies` in list order and stops at the first success.
pub fn apply_with_fallback(
    strategies: &[&dyn EditStrategy],
    edits: &[FileEdit],
    recorder: &mut Recorder<'_>,
    stage: Option<StageId>,
) -> FallbackResult {
    for (i, s) in strategies.iter().enumerate() {
        if s.apply(edits, recorder, stage) {
            return FallbackResult {
                outcome: StageOutcome::Passed,
                chosen: Some(i),
                strategy: Some(s.id()),
                attempted: i + 1,
            };
        }
    }
    FallbackResult { outcome: StageOutcome::Failed, chosen: None, strategy: None, attempted: strategies.len() }
}
