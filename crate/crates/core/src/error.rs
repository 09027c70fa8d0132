use alloc::string::String;

pub type Result<T, E = CoreError> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CoreError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("flag `{0}` is referenced by a gate but not declared in the run config")]
    UndeclaredFlag(String),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("computational accuracy needs at least one test case")]
    EmptyTests,
    #[error("sample set is empty")]
    EmptySamples,
    #[error("sample {0} lies outside [0, 1]")]
    SampleOutOfRange(String),
    #[error("alpha must lie in (0, 1], got {0}")]
    InvalidAlpha(String),
    #[error("percentile must lie in [0, 100], got {0}")]
    InvalidPercentile(String),
    #[error("invalid rational `{0}`")]
    InvalidRational(String),
    #[error("trace is not canonical: {0}")]
    NonCanonical(String),
    #[error("path `{0}` cannot be made relative to the sandbox root")]
    PathNotRelativizable(String),
    #[error("price table has no entry for model `{0}`")]
    MissingPrice(String),
    #[error("harness report row `{0}` violates pass + fail + deleted + inspect = total")]
    ReportIdentity(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("parse error: {0}")]
    Parse(String),
}
