//! Domain model shared by both orchestration modes: programs and their
//! tests, the stage plan, run configuration, system state and run records.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bytes::Bytes;
use crate::compare::NormalizationPolicy;
use crate::error::{CoreError, Result};
use crate::llm::TokenUsage;
use crate::rational::Rational;
use crate::trace::{ToolCallTrace, TraceDigest};
use crate::SCHEMA_VERSION;

/// Benchmark module category. Unknown names deserialize as `OTHER`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    Nc,
    Sm,
    Ic,
    Sq,
    Ix,
    St,
    Sg,
    Ob,
    If,
    Rl,
    Cm,
    Db,
    Rw,
    Other,
}

impl Category {
    pub const ALL: [Category; 14] = [
        Category::Nc,
        Category::Sm,
        Category::Ic,
        Category::Sq,
        Category::Ix,
        Category::St,
        Category::Sg,
        Category::Ob,
        Category::If,
        Category::Rl,
        Category::Cm,
        Category::Db,
        Category::Rw,
        Category::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Nc => "NC",
            Category::Sm => "SM",
            Category::Ic => "IC",
            Category::Sq => "SQ",
            Category::Ix => "IX",
            Category::St => "ST",
            Category::Sg => "SG",
            Category::Ob => "OB",
            Category::If => "IF",
            Category::Rl => "RL",
            Category::Cm => "CM",
            Category::Db => "DB",
            Category::Rw => "RW",
            Category::Other => "OTHER",
        }
    }

    pub fn parse_lossy(s: &str) -> Category {
        Category::ALL.into_iter().find(|c| c.as_str().eq_ignore_ascii_case(s.trim())).unwrap_or(Category::Other)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Category {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Category {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(Category::parse_lossy(&s))
    }
}

/// A file the reference run is expected to produce.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub content: Bytes,
}

/// Stored reference output; preferred over live reference execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldenOutput {
    #[serde(default)]
    pub exit_code: i32,
    pub stdout: Bytes,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    #[serde(default)]
    pub stdin_payload: Bytes,
    #[serde(default)]
    pub argv: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub expected_artifacts: Vec<Artifact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub golden: Option<GoldenOutput>,
}

/// Suite-manifest annotations for cases the benchmark marks as deleted or
/// needing manual inspection; they are ingested, never computed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotations {
    #[serde(default)]
    pub deleted: u64,
    #[serde(default)]
    pub inspect: u64,
}

impl Annotations {
    fn is_zero(&self) -> bool {
        self.deleted == 0 && self.inspect == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramUnit {
    pub id: String,
    pub category: Category,
    pub source_path: String,
    pub reference_path: String,
    /// Workspace-relative file the translation is written to.
    #[serde(default = "default_target")]
    pub target_path: String,
    pub tests: Vec<TestCase>,
    #[serde(default, skip_serializing_if = "Annotations::is_zero")]
    pub annotations: Annotations,
}

fn default_target() -> String {
    "translated.py".into()
}

impl ProgramUnit {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(CoreError::Manifest("program id must not be empty".into()));
        }
        if self.tests.is_empty() {
            return Err(CoreError::Manifest(format!("program `{}` has no tests", self.id)));
        }
        let mut seen = BTreeSet::new();
        for t in &self.tests {
            if !seen.insert(t.id.as_str()) {
                return Err(CoreError::Manifest(format!("program `{}` repeats test id `{}`", self.id, t.id)));
            }
        }
        if self.target_path.starts_with('/') || self.target_path.split('/').any(|c| c == "..") {
            return Err(CoreError::Manifest(format!("program `{}` target must be workspace-relative", self.id)));
        }
        Ok(())
    }
}

/// Parses a suite manifest (a JSON array of program descriptors) and checks
/// id uniqueness and per-program invariants.
pub fn parse_manifest(json: &str) -> Result<Vec<ProgramUnit>> {
    let programs: Vec<ProgramUnit> = serde_json::from_str(json).map_err(|e| CoreError::Manifest(e.to_string()))?;
    let mut seen = BTreeSet::new();
    for p in &programs {
        p.validate()?;
        if !seen.insert(p.id.as_str()) {
            return Err(CoreError::Manifest(format!("duplicate program id `{}`", p.id)));
        }
    }
    Ok(programs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StageId {
    Apply,
    Persist,
    Validate,
    Test,
}

impl StageId {
    pub fn as_str(self) -> &'static str {
        match self {
            StageId::Apply => "APPLY",
            StageId::Persist => "PERSIST",
            StageId::Validate => "VALIDATE",
            StageId::Test => "TEST",
        }
    }
}

impl fmt::Display for StageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Edit-application mechanisms, attempted in list order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StrategyId {
    ExactPatch,
    WholeFileRewrite,
}

/// Closed predicate language for stage gates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GatePredicate {
    Always,
    FilesModified,
    FlagEnabled { flag: String },
    AllOf { children: Vec<GatePredicate> },
    AnyOf { children: Vec<GatePredicate> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub id: StageId,
    pub gate: GatePredicate,
    pub strategies: Vec<StrategyId>,
    pub max_retries: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagePlan {
    pub stages: Vec<Stage>,
    pub global_timeout_secs: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StageOutcome {
    Passed,
    Failed,
    Skipped,
}

/// Observable state a gate may read. Only the run's orchestrator mutates
/// it, and only by appending.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemState {
    pub modified_files: BTreeSet<String>,
    pub workspace_root: String,
    pub stage_outcomes: BTreeMap<StageId, StageOutcome>,
}

impl SystemState {
    pub fn new(workspace_root: impl Into<String>) -> Self {
        Self { workspace_root: workspace_root.into(), ..Self::default() }
    }

    pub fn record_modified(&mut self, path: impl Into<String>) {
        self.modified_files.insert(path.into());
    }

    /// Records a stage outcome; a stage's outcome is written once.
    pub fn record_outcome(&mut self, stage: StageId, outcome: StageOutcome) -> Result<()> {
        if self.stage_outcomes.contains_key(&stage) {
            return Err(CoreError::Config(format!("stage {stage} already has an outcome")));
        }
        self.stage_outcomes.insert(stage, outcome);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    Deterministic,
    Agentic,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Deterministic => "DETERMINISTIC",
            Mode::Agentic => "AGENTIC",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            Mode::Deterministic => "deterministic",
            Mode::Agentic => "agentic",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which model backend serves the run. Paths are relative to the config file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BackendSpec {
    Scripted {
        model_id: String,
        scripts_dir: String,
    },
    Stub {
        model_id: String,
        config: String,
    },
    Http {
        model_id: String,
        endpoint: String,
        /// Name of the environment variable holding the credential.
        api_key_env: String,
        #[serde(default = "default_in_flight")]
        max_in_flight: u32,
    },
}

fn default_in_flight() -> u32 {
    4
}

impl BackendSpec {
    pub fn model_id(&self) -> &str {
        match self {
            BackendSpec::Scripted { model_id, .. }
            | BackendSpec::Stub { model_id, .. }
            | BackendSpec::Http { model_id, .. } => model_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Limits {
    pub max_retries: u32,
    pub retry_ceiling: u32,
    pub global_timeout_secs: u64,
    pub command_timeout_secs: u64,
    pub test_timeout_secs: u64,
    /// Bytes of failing-stage stderr included in a re-prompt.
    pub reprompt_stderr_limit: usize,
    /// Bytes of tool output echoed back to the model.
    pub tool_result_limit: usize,
    pub temperature: Rational,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_retries: 2,
            retry_ceiling: 8,
            global_timeout_secs: 600,
            command_timeout_secs: 10,
            test_timeout_secs: 10,
            reprompt_stderr_limit: 2048,
            tool_result_limit: 4096,
            temperature: Rational::zero(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SandboxPolicy {
    pub allow_network: bool,
    pub command_allowlist: Vec<String>,
    pub env_allowlist: Vec<String>,
}

impl Default for SandboxPolicy {
    fn default() -> Self {
        Self {
            allow_network: false,
            command_allowlist: ["python3", "python", "cat", "ls", "diff", "echo"]
                .into_iter()
                .map(String::from)
                .collect(),
            env_allowlist: ["PATH", "LANG", "LC_ALL", "PYTHONHASHSEED"].into_iter().map(String::from).collect(),
        }
    }
}

pub const FLAG_PERSIST: &str = "enable_persist";
pub const FLAG_VALIDATE: &str = "enable_validate";
pub const FLAG_TEST: &str = "enable_test";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: String,
    pub mode: Mode,
    pub seed: u64,
    pub flags: BTreeMap<String, bool>,
    pub prompts: String,
    pub backend: BackendSpec,
    pub max_agentic_steps: u32,
    pub token_budget: u64,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default)]
    pub sandbox: SandboxPolicy,
    #[serde(default)]
    pub harness: HarnessSettings,
}

/// How translated and reference programs are executed and compared.
/// `{entry}` in a command template is replaced by the program file and
/// `{file}` in the validation template by the file being checked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessSettings {
    pub target_command: Vec<String>,
    pub reference_command: Vec<String>,
    pub validate_command: Vec<String>,
    /// Workspace-relative directory whose files count as program output.
    pub output_dir: String,
    pub normalization: NormalizationPolicy,
}

impl Default for HarnessSettings {
    fn default() -> Self {
        let py = |rest: &[&str]| core::iter::once("python3").chain(rest.iter().copied()).map(String::from).collect();
        Self {
            target_command: py(&["{entry}"]),
            reference_command: py(&["{entry}"]),
            validate_command: py(&["-m", "ast", "{file}"]),
            output_dir: "out".into(),
            normalization: NormalizationPolicy::default(),
        }
    }
}

impl RunConfig {
    pub fn flag(&self, name: &str) -> Result<bool> {
        self.flags.get(name).copied().ok_or_else(|| CoreError::UndeclaredFlag(name.to_string()))
    }

    pub fn with_mode(&self, mode: Mode) -> Self {
        Self { mode, ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CoreError::Config(format!(
                "unsupported schema_version `{}` (expected `{SCHEMA_VERSION}`)",
                self.schema_version
            )));
        }
        for flag in [FLAG_PERSIST, FLAG_VALIDATE, FLAG_TEST] {
            self.flag(flag)?;
        }
        if self.token_budget == 0 {
            return Err(CoreError::Config("token_budget must be positive".into()));
        }
        if self.limits.max_retries > self.limits.retry_ceiling {
            return Err(CoreError::Config(format!(
                "max_retries {} exceeds the ceiling {}",
                self.limits.max_retries, self.limits.retry_ceiling
            )));
        }
        if self.prompts.is_empty() {
            return Err(CoreError::Config("prompts bundle id must not be empty".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the config's compact JSON with sorted keys.
    pub fn fingerprint(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let bytes = crate::trace::canonical_json_bytes(&value);
        crate::trace::sha256_hex(&bytes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FailureClass {
    CompileFail,
    RuntimeError,
    TestFail,
    Timeout,
    BudgetExhausted,
    ToolError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TerminationReason {
    ModelFinish,
    StepLimit,
    TokenBudget,
    FatalToolError,
}

/// Final agentic-loop counters, carried on agentic run records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgenticSummary {
    pub step_count: u32,
    /// Tokens of accepted steps only.
    pub tokens_spent: TokenUsage,
    pub termination_reason: TerminationReason,
}

/// Per-run token spend; the sum of every model call in the run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunTokens {
    pub model_id: String,
    pub calls: u32,
    pub usage: TokenUsage,
}

impl RunTokens {
    pub fn record(&mut self, usage: TokenUsage) {
        self.calls += 1;
        self.usage += usage;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: String,
    pub program_id: String,
    pub category: Category,
    pub run_index: u32,
    pub config: RunConfig,
    pub trace: ToolCallTrace,
    pub trace_hash: TraceDigest,
    pub stage_outcomes: BTreeMap<StageId, StageOutcome>,
    pub token_ledger: RunTokens,
    /// Absent when no final test evaluation ran.
    pub ca: Option<Rational>,
    pub tests_passed: u64,
    pub tests_total: u64,
    /// The translated program was executed against the test inputs.
    pub executed: bool,
    pub successful: bool,
    pub wall_time_ms: u64,
    pub error: Option<FailureClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agentic: Option<AgenticSummary>,
}

impl RunRecord {
    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    /// CA used as a tail-risk sample; a run with no evaluation counts as 0.
    pub fn ca_sample(&self) -> Rational {
        self.ca.clone().unwrap_or_else(Rational::zero)
    }

    pub fn check_invariants(&self) -> Result<()> {
        if let Some(ca) = &self.ca {
            if !ca.in_unit_interval() {
                return Err(CoreError::SampleOutOfRange(ca.to_string()));
            }
        }
        if self.successful && (self.error.is_some() || self.ca.is_none()) {
            return Err(CoreError::Config(format!(
                "run {}#{} is marked successful with an error or without CA",
                self.program_id, self.run_index
            )));
        }
        Ok(())
    }
}
