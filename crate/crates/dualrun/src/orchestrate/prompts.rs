//! Prompt bundles. Both modes send the same system prompt and task message;
//! only the orchestration messages that follow differ.

use dualrun_core::model::ProgramUnit;

pub const BUILTIN_BUNDLE: &str = "cobol-python-v1";

const SYSTEM: &str = "You are a software engineer modernizing legacy COBOL programs into Python 3.
Reply with exactly one JSON object per turn and nothing else. The object is one of:
  {\"kind\":\"CODE_EDIT\",\"edits\":[{\"path\":\"<file>\",\"content\":\"<complete file>\"}]}
  {\"kind\":\"CODE_EDIT\",\"edits\":[{\"path\":\"<file>\",\"search\":\"<exact text>\",\"content\":\"<replacement>\"}]}
  {\"kind\":\"TOOL_ACTION\",\"request\":{\"tool\":\"<TOOL>\",\"args\":{...}}}
  {\"kind\":\"FINISH\",\"status\":\"<short summary>\"}
Tools (name: arguments):
  READ_FILE: path
  WRITE_FILE: path, content
  LIST_FILES: glob
  WEB_SCRAPE: url
  RUN_COMMAND: argv, optional stdin, optional cwd
  GIT: args
All paths are relative to the workspace root.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub id: String,
    pub system: String,
}

impl PromptBundle {
    pub fn lookup(id: &str) -> Option<Self> {
        (id == BUILTIN_BUNDLE).then(|| Self { id: id.into(), system: SYSTEM.into() })
    }

    /// Task message. The `KEY: value` header lines are machine-readable.
    pub fn task(&self, program: &ProgramUnit, source_name: &str, source_text: &str, output_dir: &str) -> String {
        format!(
            "Translate the COBOL program below into an equivalent Python 3 program.\n\
             PROGRAM_ID: {}\n\
             CATEGORY: {}\n\
             SOURCE: {source_name}\n\
             TARGET: {}\n\
             The Python program must read the same standard input and produce the same standard output, \
             exit status and files under `{output_dir}/` as the original program.\n\
             \n--- {source_name} ---\n{source_text}",
            program.id, program.category, program.target_path,
        )
    }
}
