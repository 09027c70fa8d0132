//! Per-run workspace confinement and child-process execution.
//!
//! Confinement is lexical: a requested path is joined to the root, `.` and
//! `..` are folded, and the result must still lie under the root. The
//! longest existing prefix is then canonicalized so a symlink inside the
//! workspace cannot point the operation elsewhere.

use std::io::{self, Read, Write};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::{Component, Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use dualrun_core::model::SandboxPolicy;
use dualrun_core::tool::ToolErrorCode;

/// Commit identity pinned for the GIT tool so equal workspaces give equal
/// commit hashes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GitIdentity {
    pub name: String,
    pub email: String,
    /// Seconds since the epoch, used for both author and committer dates.
    pub timestamp: u64,
}

impl GitIdentity {
    const EPOCH_2000: u64 = 946_684_800;
    const SPAN: u64 = 10 * 365 * 86_400;

    pub fn from_seed(seed: u64) -> Self {
        Self {
            name: "dualrun".into(),
            email: "dualrun@localhost".into(),
            timestamp: Self::EPOCH_2000 + seed % Self::SPAN,
        }
    }

    pub fn git_date(&self) -> String {
        format!("@{} +0000", self.timestamp)
    }
}

#[derive(Debug, Clone)]
pub struct Sandbox {
    root: PathBuf,
    pub allow_network: bool,
    pub command_timeout: Duration,
    pub env_allowlist: Vec<String>,
    pub command_allowlist: Vec<String>,
    /// Directory holding `<sha256(url)>.body` / `.meta` replay fixtures.
    pub web_fixtures: Option<PathBuf>,
    pub git_identity: GitIdentity,
}

impl Sandbox {
    /// Creates `root` if needed and applies the default policy.
    pub fn new(root: impl AsRef<Path>) -> io::Result<Self> {
        Self::with_policy(root, &SandboxPolicy::default(), Duration::from_secs(10), 0)
    }

    pub fn with_policy(
        root: impl AsRef<Path>,
        policy: &SandboxPolicy,
        command_timeout: Duration,
        seed: u64,
    ) -> io::Result<Self> {
        std::fs::create_dir_all(root.as_ref())?;
        Ok(Self {
            root: root.as_ref().canonicalize()?,
            allow_network: policy.allow_network,
            command_timeout,
            env_allowlist: policy.env_allowlist.clone(),
            command_allowlist: policy.command_allowlist.clone(),
            web_fixtures: None,
            git_identity: GitIdentity::from_seed(seed),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Maps a workspace-relative (or root-prefixed absolute) path to an
    /// absolute path under the root.
    pub fn resolve(&self, requested: &str) -> Result<PathBuf, ToolErrorCode> {
        if requested.contains('\0') {
            return Err(ToolErrorCode::BadArgs);
        }
        // Backslashes are folded so Windows-style traversal is caught too.
        let unified = requested.replace('\\', "/");
        let candidate = Path::new(&unified);
        let joined = if candidate.is_absolute() { candidate.to_path_buf() } else { self.root.join(candidate) };
        let normal = lexical_normalize(&joined);
        if !normal.starts_with(&self.root) {
            return Err(ToolErrorCode::PathEscape);
        }
        let mut existing = normal.as_path();
        while !existing.exists() {
            match existing.parent() {
                Some(p) => existing = p,
                None => return Err(ToolErrorCode::PathEscape),
            }
        }
        let real = existing.canonicalize().map_err(|_| ToolErrorCode::PathEscape)?;
        if !real.starts_with(&self.root) {
            return Err(ToolErrorCode::PathEscape);
        }
        Ok(normal)
    }

    /// Workspace-relative form of `abs` with `/` separators.
    pub fn relative(&self, abs: &Path) -> Option<String> {
        let rel = abs.strip_prefix(&self.root).ok()?;
        let parts: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
        Some(parts.join("/"))
    }

    /// Allow-listed variables from the current process environment.
    pub fn child_env(&self) -> Vec<(String, String)> {
        self.env_allowlist.iter().filter_map(|k| std::env::var(k).ok().map(|v| (k.clone(), v))).collect()
    }
}

fn lexical_normalize(path: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for c in path.components() {
        match c {
            Component::ParentDir => {
                out.pop();
            }
            Component::CurDir => {}
            other => out.push(other.as_os_str()),
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProcessOutput {
    /// `None` when the process was killed on timeout.
    pub exit_code: Option<i32>,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub timed_out: bool,
    pub duration: Duration,
}

/// Runs `argv` with a cleared environment plus `env`, feeding `stdin` and
/// capturing raw output. On timeout the whole process group is killed and
/// whatever output was produced so far is kept.
pub fn run_process(
    argv: &[String],
    cwd: &Path,
    env: &[(String, String)],
    stdin: &[u8],
    timeout: Duration,
) -> io::Result<ProcessOutput> {
    let (program, args) =
        argv.split_first().ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "empty argv"))?;
    let started = Instant::now();
    let mut child = Command::new(program)
        .args(args)
        .current_dir(cwd)
        .env_clear()
        .envs(env.iter().map(|(k, v)| (k, v)))
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0)
        .spawn()?;

    let mut pipe_in = child.stdin.take().expect("stdin piped");
    let payload = stdin.to_vec();
    let writer = thread::spawn(move || {
        // A child that exits without reading its input is not an error.
        let _ = pipe_in.write_all(&payload);
    });
    let mut pipe_out = child.stdout.take().expect("stdout piped");
    let mut pipe_err = child.stderr.take().expect("stderr piped");
    let out_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = pipe_out.read_to_end(&mut buf);
        buf
    });
    let err_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = pipe_err.read_to_end(&mut buf);
        buf
    });

    // A waiter thread reaps the child so completion is observed at once;
    // the deadline is enforced by signalling the whole process group.
    let pid = child.id();
    let (done_tx, done_rx) = mpsc::channel();
    let waiter = thread::spawn(move || {
        let status = child.wait();
        let _ = done_tx.send(());
        status
    });
    let timed_out = match done_rx.recv_timeout(timeout) {
        Err(mpsc::RecvTimeoutError::Timeout) => {
            kill_group(pid);
            true
        }
        _ => false,
    };
    let status = waiter.join().map_err(|_| io::Error::other("process waiter panicked"))??;
    let _ = writer.join();
    let stdout = out_reader.join().unwrap_or_default();
    let stderr = err_reader.join().unwrap_or_default();
    let exit_code = if timed_out { None } else { status.code().or_else(|| status.signal().map(|s| 128 + s)) };
    Ok(ProcessOutput { exit_code, stdout, stderr, timed_out, duration: started.elapsed() })
}

fn kill_group(pid: u32) {
    if let Ok(pid) = libc::pid_t::try_from(pid) {
        // SAFETY: kill(2) has no memory-safety preconditions; the child was
        // started as the leader of its own process group, so -pid names it.
        unsafe {
            libc::kill(-pid, libc::SIGKILL);
        }
    }
}
