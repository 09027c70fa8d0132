//! The six controlled tools, their request shape and argument schemas.
//!
//! Both orchestration modes see exactly this tool set. Argument validation
//! mirrors the JSON Schema files published under `schemas/tools/`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ToolKind {
    ReadFile,
    WriteFile,
    ListFiles,
    WebScrape,
    RunCommand,
    Git,
}

impl ToolKind {
    pub const ALL: [ToolKind; 6] = [
        ToolKind::ReadFile,
        ToolKind::WriteFile,
        ToolKind::ListFiles,
        ToolKind::WebScrape,
        ToolKind::RunCommand,
        ToolKind::Git,
    ];

    /// Lower-case name the model sees in prompts and the schema file stem.
    pub fn name(self) -> &'static str {
        match self {
            ToolKind::ReadFile => "read_file",
            ToolKind::WriteFile => "write_file",
            ToolKind::ListFiles => "list_files",
            ToolKind::WebScrape => "web_scrape",
            ToolKind::RunCommand => "run_command",
            ToolKind::Git => "git",
        }
    }

    /// (required, optional) argument names.
    pub fn arg_names(self) -> (&'static [&'static str], &'static [&'static str]) {
        match self {
            ToolKind::ReadFile => (&["path"], &[]),
            ToolKind::WriteFile => (&["path", "content"], &[]),
            ToolKind::ListFiles => (&["glob"], &[]),
            ToolKind::WebScrape => (&["url"], &[]),
            ToolKind::RunCommand => (&["argv"], &["stdin", "cwd"]),
            ToolKind::Git => (&["args"], &[]),
        }
    }
}

impl fmt::Display for ToolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ToolErrorCode {
    PathEscape,
    BadArgs,
    Timeout,
    NetworkDisabled,
    NotFound,
    NotAllowed,
    ExitNonzero,
    Io,
}

/// `"OK"` or `{"ERROR": "<CODE>"}` on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ToolStatus {
    #[serde(rename = "OK")]
    Ok,
    #[serde(rename = "ERROR")]
    Error(ToolErrorCode),
}

impl ToolStatus {
    pub fn is_ok(self) -> bool {
        matches!(self, ToolStatus::Ok)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolRequest {
    pub tool: ToolKind,
    pub args: Map<String, Value>,
}

impl ToolRequest {
    pub fn new(tool: ToolKind, args: Value) -> Self {
        let args = match args {
            Value::Object(m) => m,
            _ => Map::new(),
        };
        Self { tool, args }
    }

    pub fn read_file(path: &str) -> Self {
        Self::new(ToolKind::ReadFile, serde_json::json!({ "path": path }))
    }

    pub fn write_file(path: &str, content: &str) -> Self {
        Self::new(ToolKind::WriteFile, serde_json::json!({ "path": path, "content": content }))
    }

    pub fn list_files(glob: &str) -> Self {
        Self::new(ToolKind::ListFiles, serde_json::json!({ "glob": glob }))
    }

    pub fn web_scrape(url: &str) -> Self {
        Self::new(ToolKind::WebScrape, serde_json::json!({ "url": url }))
    }

    pub fn run_command(argv: &[&str]) -> Self {
        Self::new(ToolKind::RunCommand, serde_json::json!({ "argv": argv }))
    }

    pub fn git(args: &[&str]) -> Self {
        Self::new(ToolKind::Git, serde_json::json!({ "args": args }))
    }

    pub fn str_arg(&self, key: &str) -> Option<&str> {
        self.args.get(key).and_then(Value::as_str)
    }

    pub fn string_list_arg(&self, key: &str) -> Option<Vec<String>> {
        self.args.get(key)?.as_array().map(|items| items.iter().filter_map(|v| v.as_str().map(String::from)).collect())
    }

    /// Checks the arguments against the fixed per-tool schema: required keys
    /// present, no unknown keys, and every value of the declared JSON type.
    pub fn validate(&self) -> Result<()> {
        let (required, optional) = self.tool.arg_names();
        for key in required {
            if !self.args.contains_key(*key) {
                return Err(bad(self.tool, format!("missing `{key}`")));
            }
        }
        for (key, value) in &self.args {
            if !required.contains(&key.as_str()) && !optional.contains(&key.as_str()) {
                return Err(bad(self.tool, format!("unexpected argument `{key}`")));
            }
            match key.as_str() {
                "argv" | "args" => {
                    let items = value.as_array().ok_or_else(|| bad(self.tool, format!("`{key}` must be an array")))?;
                    if items.is_empty() {
                        return Err(bad(self.tool, format!("`{key}` must not be empty")));
                    }
                    if !items.iter().all(Value::is_string) {
                        return Err(bad(self.tool, format!("`{key}` must contain only strings")));
                    }
                }
                _ => {
                    let s = value.as_str().ok_or_else(|| bad(self.tool, format!("`{key}` must be a string")))?;
                    if matches!(key.as_str(), "path" | "glob" | "url") && s.is_empty() {
                        return Err(bad(self.tool, format!("`{key}` must not be empty")));
                    }
                }
            }
        }
        Ok(())
    }
}

fn bad(tool: ToolKind, msg: String) -> CoreError {
    CoreError::InvalidRequest(format!("{tool}: {msg}"))
}
