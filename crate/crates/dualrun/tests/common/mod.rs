#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use dualrun::batch::{load_config, load_suite, Suite};
use dualrun::fixtures::{write_suite, SCRIPTED_CONFIG, STUB_CONFIG};
use dualrun::gateway::{build_backend, Backend, RetryPolicy};
use dualrun::harness::reference_outcomes;
use dualrun::orchestrate::{run, RunInputs, RunOutput};
use dualrun_core::compare::ExecutionOutcome;
use dualrun_core::model::{Mode, ProgramUnit, RunConfig};

pub mod traversal;

/// A private copy of the bundled suite plus precomputed references.
pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub suite: Suite,
    pub references: Vec<Vec<ExecutionOutcome>>,
}

impl Fixture {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_suite(&dir.path().join("suite")).unwrap();
        let suite = load_suite(&manifest).unwrap();
        let (config, _) = load_config(&suite.dir.join(SCRIPTED_CONFIG)).unwrap();
        let references = suite
            .programs
            .iter()
            .map(|p| {
                let scratch = dir.path().join("ref").join(&p.id);
                reference_outcomes(p, &suite.dir, &config.harness, &scratch, Duration::from_secs(10)).unwrap()
            })
            .collect();
        Fixture { dir, suite, references }
    }

    pub fn suite_dir(&self) -> &Path {
        &self.suite.dir
    }

    pub fn manifest(&self) -> PathBuf {
        self.suite.dir.join("manifest.json")
    }

    pub fn program(&self, id: &str) -> (usize, &ProgramUnit) {
        self.suite.programs.iter().enumerate().find(|(_, p)| p.id == id).expect("fixture program")
    }

    pub fn scripted(&self) -> (RunConfig, Arc<dyn Backend>) {
        self.config(SCRIPTED_CONFIG)
    }

    pub fn stub(&self) -> (RunConfig, Arc<dyn Backend>) {
        self.config(STUB_CONFIG)
    }

    fn config(&self, name: &str) -> (RunConfig, Arc<dyn Backend>) {
        let (config, dir) = load_config(&self.suite.dir.join(name)).unwrap();
        let backend = build_backend(&config.backend, &dir).unwrap();
        (config, backend)
    }

    /// One run in a fresh workspace.
    pub fn run(&self, id: &str, config: &RunConfig, mode: Mode, idx: u32, backend: &dyn Backend) -> RunOutput {
        let (pi, program) = self.program(id);
        let config = config.with_mode(mode);
        let workspace = self.dir.path().join("ws").join(mode.slug()).join(id).join(format!("{idx}-{}", config.seed));
        let _ = std::fs::remove_dir_all(&workspace);
        let web = self.suite.dir.join("web");
        let inputs = RunInputs {
            program,
            suite_dir: &self.suite.dir,
            config: &config,
            run_index: idx,
            workspace: &workspace,
            references: &self.references[pi],
            web_fixtures: Some(&web),
            retry: RetryPolicy { attempts: 3, base_delay: Duration::from_millis(1) },
        };
        let out = run(&inputs, backend);
        let _ = std::fs::remove_dir_all(&workspace);
        out
    }
}
