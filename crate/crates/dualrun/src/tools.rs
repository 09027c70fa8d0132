//! The six controlled tools behind one `invoke` entry point.
//!
//! Every tool runs against a [`Sandbox`]. Results carry raw bytes; nothing
//! is decoded except where a payload field is documented as text.

use std::fs;
use std::io;
use std::path::Path;
use std::time::{Duration, Instant};

use globset::GlobBuilder;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use walkdir::WalkDir;

use dualrun_core::tool::{ToolErrorCode, ToolKind, ToolRequest, ToolStatus};
use dualrun_core::trace::sha256_hex;
use dualrun_core::Bytes;

use crate::sandbox::{run_process, Sandbox};

const GIT_SUBCOMMANDS: [&str; 9] = ["init", "add", "commit", "status", "diff", "log", "rev-parse", "show", "ls-files"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolResult {
    pub status: ToolStatus,
    pub stdout: Bytes,
    pub stderr: Bytes,
    pub exit_code: Option<i32>,
    pub payload: Value,
    pub duration_ms: u64,
}

impl ToolResult {
    fn ok(payload: Value) -> Self {
        Self {
            status: ToolStatus::Ok,
            stdout: Bytes::new(),
            stderr: Bytes::new(),
            exit_code: None,
            payload,
            duration_ms: 0,
        }
    }

    fn error(code: ToolErrorCode, message: impl Into<String>) -> Self {
        Self {
            status: ToolStatus::Error(code),
            stdout: Bytes::new(),
            stderr: Bytes::from(message.into()),
            exit_code: None,
            payload: Value::Null,
            duration_ms: 0,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status.is_ok()
    }
}

fn io_code(e: &io::Error) -> ToolErrorCode {
    match e.kind() {
        io::ErrorKind::NotFound => ToolErrorCode::NotFound,
        _ => ToolErrorCode::Io,
    }
}

/// Validates and executes one request. Never panics on bad input; every
/// failure becomes an `ERROR` result.
pub fn invoke(request: &ToolRequest, sandbox: &Sandbox) -> ToolResult {
    let started = Instant::now();
    let mut result = match request.validate() {
        Err(e) => ToolResult::error(ToolErrorCode::BadArgs, e.to_string()),
        Ok(()) => match request.tool {
            ToolKind::ReadFile => read_file(request, sandbox),
            ToolKind::WriteFile => write_file(request, sandbox),
            ToolKind::ListFiles => match list_files(sandbox, request.str_arg("glob").unwrap_or_default()) {
                Ok(files) => {
                    let mut r = ToolResult::ok(json!({ "files": files }));
                    r.stdout = Bytes::from(files.iter().map(|f| format!("{f}\n")).collect::<String>());
                    r
                }
                Err(code) => ToolResult::error(code, "invalid glob"),
            },
            ToolKind::WebScrape => web_scrape(request.str_arg("url").unwrap_or_default(), sandbox),
            ToolKind::RunCommand => run_command(request, sandbox),
            ToolKind::Git => git(request, sandbox),
        },
    };
    result.duration_ms = started.elapsed().as_millis() as u64;
    result
}

fn read_file(request: &ToolRequest, sandbox: &Sandbox) -> ToolResult {
    let rel = request.str_arg("path").unwrap_or_default();
    let path = match sandbox.resolve(rel) {
        Ok(p) => p,
        Err(code) => return ToolResult::error(code, format!("path `{rel}` is outside the workspace")),
    };
    match fs::read(&path) {
        Ok(bytes) => {
            let content = Bytes(bytes);
            let mut r = ToolResult::ok(json!({
                "path": sandbox.relative(&path).unwrap_or_default(),
                "bytes": content.len(),
                "content": content,
            }));
            r.stdout = content;
            r
        }
        Err(e) => ToolResult::error(io_code(&e), e.to_string()),
    }
}

fn write_file(request: &ToolRequest, sandbox: &Sandbox) -> ToolResult {
    let rel = request.str_arg("path").unwrap_or_default();
    let content = request.str_arg("content").unwrap_or_default();
    let path = match sandbox.resolve(rel) {
        Ok(p) => p,
        Err(code) => return ToolResult::error(code, format!("path `{rel}` is outside the workspace")),
    };
    if path == sandbox.root() {
        return ToolResult::error(ToolErrorCode::BadArgs, "cannot write to the workspace root");
    }
    let written = path.parent().map_or(Ok(()), fs::create_dir_all).and_then(|()| fs::write(&path, content.as_bytes()));
    match written {
        Ok(()) => ToolResult::ok(json!({
            "path": sandbox.relative(&path).unwrap_or_default(),
            "bytes": content.len(),
        })),
        Err(e) => ToolResult::error(io_code(&e), e.to_string()),
    }
}

/// Files under the root matching `glob`, `/`-separated and sorted
/// lexicographically. `*` does not cross directories; use `**` for that.
/// The `.git` directory is never listed.
pub fn list_files(sandbox: &Sandbox, glob: &str) -> Result<Vec<String>, ToolErrorCode> {
    let matcher =
        GlobBuilder::new(glob).literal_separator(true).build().map_err(|_| ToolErrorCode::BadArgs)?.compile_matcher();
    let mut files: Vec<String> = WalkDir::new(sandbox.root())
        .min_depth(1)
        .into_iter()
        .filter_entry(|e| e.file_name() != ".git")
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .filter_map(|e| sandbox.relative(e.path()))
        .filter(|rel| matcher.is_match(rel))
        .collect();
    files.sort();
    Ok(files)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct FixtureMeta {
    url: String,
    #[serde(default)]
    content_type: String,
}

/// Stores a replay fixture for `url` under `dir`.
pub fn register_web_fixture(dir: &Path, url: &str, content_type: &str, body: &[u8]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let key = sha256_hex(url.as_bytes());
    fs::write(dir.join(format!("{key}.body")), body)?;
    let meta = FixtureMeta { url: url.into(), content_type: content_type.into() };
    fs::write(dir.join(format!("{key}.meta")), serde_json::to_vec_pretty(&meta)?)
}

fn scrape_ok(url: &str, content_type: &str, body: Vec<u8>, source: &str) -> ToolResult {
    let body = Bytes(body);
    let mut r = ToolResult::ok(json!({
        "url": url,
        "content_type": content_type,
        "body_sha256": sha256_hex(&body),
        "source": source,
        "body": body,
    }));
    r.stdout = body;
    r
}

/// Replays from the fixture directory when the network is off, fetches
/// live when it is on.
pub fn web_scrape(url: &str, sandbox: &Sandbox) -> ToolResult {
    if sandbox.allow_network {
        return fetch(url, sandbox.command_timeout);
    }
    let Some(dir) = &sandbox.web_fixtures else {
        return ToolResult::error(ToolErrorCode::NetworkDisabled, "network disabled and no fixture directory");
    };
    let key = sha256_hex(url.as_bytes());
    match fs::read(dir.join(format!("{key}.body"))) {
        Ok(body) => {
            let meta: FixtureMeta = fs::read(dir.join(format!("{key}.meta")))
                .ok()
                .and_then(|m| serde_json::from_slice(&m).ok())
                .unwrap_or_default();
            scrape_ok(url, &meta.content_type, body, "fixture")
        }
        Err(_) => ToolResult::error(ToolErrorCode::NetworkDisabled, format!("no fixture for `{url}`")),
    }
}

fn fetch(url: &str, timeout: Duration) -> ToolResult {
    let agent =
        ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().new_agent();
    let mut response = match agent.get(url).call() {
        Ok(r) => r,
        Err(e) => return ToolResult::error(ToolErrorCode::Io, e.to_string()),
    };
    if !response.status().is_success() {
        return ToolResult::error(ToolErrorCode::Io, format!("HTTP {}", response.status()));
    }
    let content_type =
        response.headers().get("content-type").and_then(|v| v.to_str().ok()).unwrap_or_default().to_string();
    match response.body_mut().read_to_vec() {
        Ok(body) => scrape_ok(url, &content_type, body, "network"),
        Err(e) => ToolResult::error(ToolErrorCode::Io, e.to_string()),
    }
}

/// Any argument that names a path (directly or as `--opt=value`) must stay
/// inside the workspace. Interpreter programs themselves are not confined.
fn check_path_args(args: &[String], sandbox: &Sandbox) -> Result<(), ToolErrorCode> {
    for arg in args {
        let candidate = match arg.strip_prefix('-') {
            Some(_) => match arg.split_once('=') {
                Some((_, v)) => v,
                None => continue,
            },
            None => arg.as_str(),
        };
        let looks_like_path =
            candidate.contains('/') || candidate.contains('\\') || candidate == ".." || candidate.starts_with('~');
        if looks_like_path {
            if candidate.starts_with('~') {
                return Err(ToolErrorCode::PathEscape);
            }
            sandbox.resolve(candidate)?;
        }
    }
    Ok(())
}

fn process_result(out: crate::sandbox::ProcessOutput, argv: &[String]) -> ToolResult {
    let status = if out.timed_out {
        ToolStatus::Error(ToolErrorCode::Timeout)
    } else if out.exit_code != Some(0) {
        ToolStatus::Error(ToolErrorCode::ExitNonzero)
    } else {
        ToolStatus::Ok
    };
    ToolResult {
        status,
        payload: json!({ "argv": argv, "exit_code": out.exit_code, "timed_out": out.timed_out }),
        stdout: Bytes(out.stdout),
        stderr: Bytes(out.stderr),
        exit_code: out.exit_code,
        duration_ms: 0,
    }
}

fn run_command(request: &ToolRequest, sandbox: &Sandbox) -> ToolResult {
    let argv = request.string_list_arg("argv").unwrap_or_default();
    let program = &argv[0];
    if program.contains('/') || !sandbox.command_allowlist.iter().any(|c| c == program) {
        return ToolResult::error(ToolErrorCode::NotAllowed, format!("`{program}` is not on the command allowlist"));
    }
    if let Err(code) = check_path_args(&argv[1..], sandbox) {
        return ToolResult::error(code, "argument path is outside the workspace");
    }
    let cwd = match request.str_arg("cwd") {
        Some(rel) => match sandbox.resolve(rel) {
            Ok(p) if p.is_dir() => p,
            Ok(_) => return ToolResult::error(ToolErrorCode::NotFound, format!("no directory `{rel}`")),
            Err(code) => return ToolResult::error(code, format!("cwd `{rel}` is outside the workspace")),
        },
        None => sandbox.root().to_path_buf(),
    };
    let stdin = request.str_arg("stdin").unwrap_or_default();
    match run_process(&argv, &cwd, &sandbox.child_env(), stdin.as_bytes(), sandbox.command_timeout) {
        Ok(out) => process_result(out, &argv),
        Err(e) => ToolResult::error(io_code(&e), e.to_string()),
    }
}

fn git(request: &ToolRequest, sandbox: &Sandbox) -> ToolResult {
    let args = request.string_list_arg("args").unwrap_or_default();
    if !GIT_SUBCOMMANDS.contains(&args[0].as_str()) {
        return ToolResult::error(ToolErrorCode::NotAllowed, format!("git subcommand `{}` is not allowed", args[0]));
    }
    if let Err(code) = check_path_args(&args[1..], sandbox) {
        return ToolResult::error(code, "argument path is outside the workspace");
    }
    let root = sandbox.root();
    let mut argv: Vec<String> =
        ["git", "-c", "init.defaultBranch=main", "-c", "commit.gpgsign=false", "-c", "core.autocrlf=false"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    argv.extend(args);
    let id = &sandbox.git_identity;
    let mut env = sandbox.child_env();
    let ceiling = root.parent().unwrap_or(root).to_string_lossy().into_owned();
    env.extend(
        [
            ("HOME", root.to_string_lossy().into_owned()),
            ("GIT_CONFIG_NOSYSTEM", "1".into()),
            ("GIT_CONFIG_GLOBAL", "/dev/null".into()),
            ("GIT_CEILING_DIRECTORIES", ceiling),
            ("GIT_TERMINAL_PROMPT", "0".into()),
            ("GIT_AUTHOR_NAME", id.name.clone()),
            ("GIT_AUTHOR_EMAIL", id.email.clone()),
            ("GIT_AUTHOR_DATE", id.git_date()),
            ("GIT_COMMITTER_NAME", id.name.clone()),
            ("GIT_COMMITTER_EMAIL", id.email.clone()),
            ("GIT_COMMITTER_DATE", id.git_date()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v)),
    );
    match run_process(&argv, root, &env, b"", sandbox.command_timeout) {
        Ok(out) => process_result(out, &argv[7..]),
        Err(e) => ToolResult::error(io_code(&e), e.to_string()),
    }
}
