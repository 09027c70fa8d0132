//! Runs reference and translated programs on shared test inputs and scores
//! the translated outcomes against the reference ones.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;
use std::time::Duration;

use thiserror::Error;
use walkdir::WalkDir;

use dualrun_core::compare::{accuracy_from_matches, outcomes_equal, ExecutionOutcome, NormalizationPolicy};
use dualrun_core::model::{HarnessSettings, ProgramUnit, TestCase};
use dualrun_core::{Bytes, Rational};

use crate::sandbox::{run_process, Sandbox};

#[derive(Debug, Error)]
pub enum HarnessError {
    /// The program (or its interpreter) could not be found; distinct from
    /// the program failing.
    #[error("missing executable: {0}")]
    MissingExecutable(String),
    #[error("harness I/O: {0}")]
    Io(#[from] io::Error),
    #[error("no tests to evaluate")]
    NoTests,
}

/// Interpreter template, entry file and declared output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutableSpec {
    /// `{entry}` is replaced by the entry path.
    pub command: Vec<String>,
    pub entry: String,
    pub output_dir: String,
}

impl ExecutableSpec {
    pub fn target(settings: &HarnessSettings, entry: &str) -> Self {
        Self { command: settings.target_command.clone(), entry: entry.into(), output_dir: settings.output_dir.clone() }
    }

    pub fn reference(settings: &HarnessSettings, entry: &str) -> Self {
        Self {
            command: settings.reference_command.clone(),
            entry: entry.into(),
            output_dir: settings.output_dir.clone(),
        }
    }

    pub fn argv(&self, test: &TestCase) -> Vec<String> {
        self.command.iter().map(|part| part.replace("{entry}", &self.entry)).chain(test.argv.iter().cloned()).collect()
    }
}

/// Executes one test. The output directory is emptied first; every file in
/// it afterwards is captured, keyed by its path inside the directory.
pub fn execute_program(
    spec: &ExecutableSpec,
    test: &TestCase,
    sandbox: &Sandbox,
    timeout: Duration,
) -> Result<ExecutionOutcome, HarnessError> {
    let entry = sandbox.resolve(&spec.entry).map_err(|_| HarnessError::MissingExecutable(spec.entry.clone()))?;
    if !entry.is_file() {
        return Err(HarnessError::MissingExecutable(spec.entry.clone()));
    }
    let out_dir = sandbox
        .resolve(&spec.output_dir)
        .map_err(|_| HarnessError::Io(io::Error::other("output directory escapes the workspace")))?;
    if out_dir.exists() {
        fs::remove_dir_all(&out_dir)?;
    }
    fs::create_dir_all(&out_dir)?;
    let argv = spec.argv(test);
    let out = run_process(&argv, sandbox.root(), &sandbox.child_env(), &test.stdin_payload, timeout).map_err(|e| {
        if e.kind() == io::ErrorKind::NotFound {
            HarnessError::MissingExecutable(argv[0].clone())
        } else {
            HarnessError::Io(e)
        }
    })?;
    Ok(ExecutionOutcome {
        exit_code: out.exit_code.unwrap_or(-1),
        stdout: Bytes(out.stdout),
        stderr: Bytes(out.stderr),
        produced_files: collect_files(&out_dir)?,
        timed_out: out.timed_out,
    })
}

fn collect_files(dir: &Path) -> io::Result<BTreeMap<String, Bytes>> {
    let mut files = BTreeMap::new();
    for entry in WalkDir::new(dir).min_depth(1) {
        let entry = entry.map_err(io::Error::other)?;
        if entry.file_type().is_file() {
            let rel = entry.path().strip_prefix(dir).expect("walk stays under dir");
            let key: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
            files.insert(key.join("/"), Bytes(fs::read(entry.path())?));
        }
    }
    Ok(files)
}

/// Outcome recorded in the manifest, when the test carries one.
pub fn golden_outcome(test: &TestCase) -> Option<ExecutionOutcome> {
    let golden = test.golden.as_ref()?;
    Some(ExecutionOutcome {
        exit_code: golden.exit_code,
        stdout: golden.stdout.clone(),
        stderr: Bytes::new(),
        produced_files: test.expected_artifacts.iter().map(|a| (a.path.clone(), a.content.clone())).collect(),
        timed_out: false,
    })
}

/// Reference outcome per test: stored golden output when present,
/// otherwise a live run of the reference program in `scratch`.
pub fn reference_outcomes(
    program: &ProgramUnit,
    suite_dir: &Path,
    settings: &HarnessSettings,
    scratch: &Path,
    timeout: Duration,
) -> Result<Vec<ExecutionOutcome>, HarnessError> {
    let mut sandbox: Option<(Sandbox, ExecutableSpec)> = None;
    let mut outcomes = Vec::with_capacity(program.tests.len());
    for test in &program.tests {
        if let Some(golden) = golden_outcome(test) {
            outcomes.push(golden);
            continue;
        }
        if sandbox.is_none() {
            let source = suite_dir.join(&program.reference_path);
            let name = source
                .file_name()
                .ok_or_else(|| HarnessError::MissingExecutable(program.reference_path.clone()))?
                .to_string_lossy()
                .into_owned();
            let sb = Sandbox::new(scratch)?;
            fs::copy(&source, sb.root().join(&name))
                .map_err(|_| HarnessError::MissingExecutable(program.reference_path.clone()))?;
            sandbox = Some((sb, ExecutableSpec::reference(settings, &name)));
        }
        let (sb, spec) = sandbox.as_ref().expect("initialized above");
        outcomes.push(execute_program(spec, test, sb, timeout)?);
    }
    Ok(outcomes)
}

/// Scores translated outcomes against reference outcomes, test by test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestEvaluation {
    pub matches: Vec<bool>,
    pub ca: Rational,
    pub any_timeout: bool,
    /// Some test exited non-zero where the reference exited zero.
    pub runtime_error: bool,
    /// First failing test, formatted for a repair prompt.
    pub first_failure: Option<String>,
}

impl TestEvaluation {
    pub fn passed(&self) -> u64 {
        self.matches.iter().filter(|m| **m).count() as u64
    }

    pub fn total(&self) -> u64 {
        self.matches.len() as u64
    }
}

fn clip(bytes: &[u8], limit: usize) -> String {
    let text = String::from_utf8_lossy(&bytes[..bytes.len().min(limit)]).into_owned();
    if bytes.len() > limit {
        format!("{text}\n[... {} more bytes]", bytes.len() - limit)
    } else {
        text
    }
}

pub fn score(
    tests: &[TestCase],
    generated: &[ExecutionOutcome],
    reference: &[ExecutionOutcome],
    policy: &NormalizationPolicy,
    detail_limit: usize,
) -> Result<TestEvaluation, HarnessError> {
    let matches: Vec<bool> = generated.iter().zip(reference).map(|(g, r)| outcomes_equal(g, r, policy)).collect();
    let ca = accuracy_from_matches(&matches).map_err(|_| HarnessError::NoTests)?;
    let first_failure = matches.iter().position(|m| !m).map(|i| {
        let (g, r) = (&generated[i], &reference[i]);
        let status = if g.timed_out { "timed out".to_string() } else { format!("exit {}", g.exit_code) };
        format!(
            "test {}: {status} (expected exit {})\n--- expected stdout ---\n{}\n--- actual stdout ---\n{}\n--- stderr ---\n{}",
            tests[i].id,
            r.exit_code,
            clip(&r.stdout, detail_limit),
            clip(&g.stdout, detail_limit),
            clip(&g.stderr, detail_limit),
        )
    });
    Ok(TestEvaluation {
        any_timeout: generated.iter().any(|g| g.timed_out),
        runtime_error: generated
            .iter()
            .zip(reference)
            .any(|(g, r)| !g.timed_out && g.exit_code != 0 && r.exit_code == 0),
        matches,
        ca,
        first_failure,
    })
}
