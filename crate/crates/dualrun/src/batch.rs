//! Batch driver: fans (mode, program, repeat) runs out to a worker pool
//! and writes one sorted JSONL runlog per mode.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use thiserror::Error;

use dualrun_core::compare::ExecutionOutcome;
use dualrun_core::model::{parse_manifest, Mode, ProgramUnit, RunConfig, RunRecord};

use crate::gateway::{build_backend, write_transcript, Backend, RetryPolicy};
use crate::harness::reference_outcomes;
use crate::orchestrate::{run, PromptBundle, RunInputs};

#[derive(Debug, Error)]
pub enum BatchError {
    /// Bad invocation, manifest or config; nothing was written.
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl BatchError {
    pub fn exit_code(&self) -> i32 {
        match self {
            BatchError::Usage(_) => 2,
            BatchError::Runtime(_) => 1,
        }
    }
}

fn runtime(context: &str) -> impl Fn(io::Error) -> BatchError + '_ {
    move |e| BatchError::Runtime(format!("{context}: {e}"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchSpec {
    pub suite: PathBuf,
    pub config: PathBuf,
    pub modes: Vec<Mode>,
    pub repeats: u32,
    /// Run `i` uses seed `seed_base + i`.
    pub seed_base: u64,
    pub parallelism: usize,
    pub out: PathBuf,
}

/// Cores, capped at 8.
pub fn default_parallelism() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get()).min(8)
}

pub struct Suite {
    pub programs: Vec<ProgramUnit>,
    /// Directory the manifest's paths resolve against.
    pub dir: PathBuf,
}

pub fn load_suite(manifest: &Path) -> Result<Suite, BatchError> {
    let text = fs::read_to_string(manifest)
        .map_err(|e| BatchError::Usage(format!("cannot read manifest {}: {e}", manifest.display())))?;
    let programs = parse_manifest(&text).map_err(|e| BatchError::Usage(format!("{}: {e}", manifest.display())))?;
    for p in &programs {
        p.validate().map_err(|e| BatchError::Usage(format!("{}: {e}", manifest.display())))?;
    }
    let dir = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Suite { programs, dir })
}

/// Parses and validates a run config. Returns it with its directory, which
/// backend paths are relative to.
pub fn load_config(path: &Path) -> Result<(RunConfig, PathBuf), BatchError> {
    let text = fs::read_to_string(path)
        .map_err(|e| BatchError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let config: RunConfig =
        serde_json::from_str(&text).map_err(|e| BatchError::Usage(format!("{}: {e}", path.display())))?;
    config.validate().map_err(|e| BatchError::Usage(format!("{}: {e}", path.display())))?;
    if PromptBundle::lookup(&config.prompts).is_none() {
        return Err(BatchError::Usage(format!("{}: unknown prompt bundle `{}`", path.display(), config.prompts)));
    }
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((config, dir))
}

pub fn runlog_path(out: &Path, mode: Mode) -> PathBuf {
    out.join(format!("runs-{}.jsonl", mode.slug()))
}

#[derive(Debug, Default)]
pub struct BatchResult {
    pub records: BTreeMap<Mode, Vec<RunRecord>>,
    pub runlogs: Vec<PathBuf>,
}

/// Validates everything, then executes `repeats × programs × modes` runs.
/// Individual run failures are recorded, never raised.
pub fn run_batch(spec: &BatchSpec) -> Result<BatchResult, BatchError> {
    if spec.repeats == 0 {
        return Err(BatchError::Usage("--repeats must be at least 1".into()));
    }
    if spec.parallelism == 0 {
        return Err(BatchError::Usage("--parallel must be at least 1".into()));
    }
    if spec.modes.is_empty() {
        return Err(BatchError::Usage("no mode selected".into()));
    }
    let (config, config_dir) = load_config(&spec.config)?;
    let suite = load_suite(&spec.suite)?;
    let backend = build_backend(&config.backend, &config_dir).map_err(|e| BatchError::Usage(e.to_string()))?;
    run_batch_with(spec, &config, &suite, backend)
}

/// As [`run_batch`] with the inputs already loaded.
pub fn run_batch_with(
    spec: &BatchSpec,
    config: &RunConfig,
    suite: &Suite,
    backend: Arc<dyn Backend>,
) -> Result<BatchResult, BatchError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.parallelism)
        .build()
        .map_err(|e| BatchError::Runtime(e.to_string()))?;
    let work = spec.out.join("work");
    let web = suite.dir.join("web");
    let web_fixtures = web.is_dir().then_some(web.as_path());
    let timeout = Duration::from_secs(config.limits.test_timeout_secs);

    let references: Vec<Vec<ExecutionOutcome>> = pool.install(|| {
        suite
            .programs
            .par_iter()
            .map(|p| {
                let scratch = work.join("reference").join(&p.id);
                let _ = fs::remove_dir_all(&scratch);
                let r = reference_outcomes(p, &suite.dir, &config.harness, &scratch, timeout)
                    .map_err(|e| BatchError::Runtime(format!("reference for {}: {e}", p.id)));
                let _ = fs::remove_dir_all(&scratch);
                r
            })
            .collect::<Result<_, _>>()
    })?;

    let mut jobs = Vec::new();
    for &mode in &spec.modes {
        for (pi, program) in suite.programs.iter().enumerate() {
            for idx in 0..spec.repeats {
                jobs.push((mode, pi, program, idx));
            }
        }
    }
    let outputs: Vec<_> = pool.install(|| {
        jobs.par_iter()
            .map(|&(mode, pi, program, idx)| {
                let run_config = config.with_mode(mode).with_seed(spec.seed_base + u64::from(idx));
                let workspace = work.join(mode.slug()).join(&program.id).join(idx.to_string());
                let _ = fs::remove_dir_all(&workspace);
                let inputs = RunInputs {
                    program,
                    suite_dir: &suite.dir,
                    config: &run_config,
                    run_index: idx,
                    workspace: &workspace,
                    references: &references[pi],
                    web_fixtures,
                    retry: RetryPolicy::default(),
                };
                let output = run(&inputs, backend.as_ref());
                let _ = fs::remove_dir_all(&workspace);
                (mode, output)
            })
            .collect()
    });
    let _ = fs::remove_dir_all(&work);

    let mut result = BatchResult::default();
    for (mode, output) in outputs {
        let name = format!("{}-{}.jsonl", output.record.program_id, output.record.run_index);
        let transcript = spec.out.join("transcripts").join(mode.slug()).join(name);
        write_transcript(&transcript, &output.transcript).map_err(runtime("writing transcript"))?;
        result.records.entry(mode).or_default().push(output.record);
    }
    for (&mode, records) in result.records.iter_mut() {
        records.sort_by(|a, b| (&a.program_id, a.run_index).cmp(&(&b.program_id, b.run_index)));
        let path = runlog_path(&spec.out, mode);
        write_runlog(&path, records).map_err(runtime("writing runlog"))?;
        result.runlogs.push(path);
    }
    Ok(result)
}

pub fn write_runlog(path: &Path, records: &[RunRecord]) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
