//! Canonical tool-call traces: recording shape, canonicalization, digest and
//! divergence.
//!
//! # Canonical form
//!
//! * entries carry logical sequence numbers `0, 1, 2, ...`, never clock times;
//! * object keys are sorted recursively and integral floats become integers;
//! * strings under path-valued keys (`path`, `cwd`, `dir`, `file`, `paths`)
//!   use `/` separators and are relative to the sandbox root; the root prefix
//!   is stripped from every other string as well;
//! * timing keys (`duration_ms`, `elapsed_ms`, `started_ms`, `timestamp`) are
//!   dropped.
//!
//! # Digest encoding
//!
//! `SHA-256( u64_be(n) || for each entry: u64_be(len) || json )` where `json`
//! is the compact UTF-8 JSON of the canonical entry with sorted keys and no
//! insignificant whitespace. Run id and config fingerprint are not hashed, so
//! equal control flow in different runs yields equal digests.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Number, Value};
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};
use crate::model::{StageId, StrategyId};
use crate::tool::{ToolKind, ToolStatus};

const PATH_KEYS: [&str; 5] = ["path", "cwd", "dir", "file", "paths"];
const TIMING_KEYS: [&str; 5] = ["duration", "duration_ms", "elapsed_ms", "started_ms", "timestamp"];

/// One tool invocation as observed during a run, before canonicalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTraceEntry {
    pub stage_id: Option<StageId>,
    pub tool: ToolKind,
    pub args: Value,
    pub status: ToolStatus,
    pub strategy_id: Option<StrategyId>,
    #[serde(default)]
    pub started_ms: Option<u64>,
    #[serde(default)]
    pub duration_ms: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawTrace {
    pub run_id: String,
    pub config_fingerprint: String,
    /// Absolute sandbox root used to relativize paths; empty when unknown.
    pub root: String,
    pub entries: Vec<RawTraceEntry>,
}

impl RawTrace {
    pub fn new(run_id: impl Into<String>, fingerprint: impl Into<String>, root: impl Into<String>) -> Self {
        Self { run_id: run_id.into(), config_fingerprint: fingerprint.into(), root: root.into(), entries: Vec::new() }
    }

    pub fn push(&mut self, entry: RawTraceEntry) {
        self.entries.push(entry);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_id: Option<StageId>,
    pub tool: ToolKind,
    pub canonical_args: Value,
    pub status: ToolStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy_id: Option<StrategyId>,
}

impl TraceEntry {
    fn same_action(&self, other: &TraceEntry) -> bool {
        self.tool == other.tool
            && self.canonical_args == other.canonical_args
            && self.status == other.status
            && self.strategy_id == other.strategy_id
            && self.stage_id == other.stage_id
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCallTrace {
    pub run_id: String,
    pub config_fingerprint: String,
    pub entries: Vec<TraceEntry>,
}

impl From<ToolCallTrace> for RawTrace {
    fn from(t: ToolCallTrace) -> Self {
        RawTrace {
            run_id: t.run_id,
            config_fingerprint: t.config_fingerprint,
            root: String::new(),
            entries: t
                .entries
                .into_iter()
                .map(|e| RawTraceEntry {
                    stage_id: e.stage_id,
                    tool: e.tool,
                    args: e.canonical_args,
                    status: e.status,
                    strategy_id: e.strategy_id,
                    started_ms: None,
                    duration_ms: None,
                })
                .collect(),
        }
    }
}

/// Strips clock data, relativizes paths, sorts keys and numbers entries.
/// Idempotent: canonicalizing a canonical trace returns it unchanged.
pub fn canonicalize(raw: &RawTrace) -> Result<ToolCallTrace> {
    let root = normalize_separators(raw.root.trim_end_matches(['/', '\\']));
    let entries = raw
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            Ok(TraceEntry {
                seq: i as u64,
                stage_id: e.stage_id,
                tool: e.tool,
                canonical_args: canonical_value(&e.args, &root, false)?,
                status: e.status,
                strategy_id: e.strategy_id,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ToolCallTrace { run_id: raw.run_id.clone(), config_fingerprint: raw.config_fingerprint.clone(), entries })
}

fn normalize_separators(s: &str) -> String {
    s.replace('\\', "/")
}

fn is_absolute(s: &str) -> bool {
    let b = s.as_bytes();
    s.starts_with('/') || (b.len() >= 2 && b[0].is_ascii_alphabetic() && b[1] == b':')
}

fn relativize(s: &str, root: &str) -> String {
    if root.is_empty() {
        return s.to_string();
    }
    let prefix = format!("{root}/");
    let replaced = s.replace(&prefix, "");
    if replaced == root {
        ".".to_string()
    } else {
        replaced
    }
}

fn canonical_path(s: &str, root: &str) -> Result<String> {
    let s = normalize_separators(s);
    let rel = relativize(&s, root);
    if is_absolute(&rel) {
        return Err(CoreError::PathNotRelativizable(s));
    }
    let mut trimmed = rel.as_str();
    while let Some(rest) = trimmed.strip_prefix("./") {
        trimmed = rest;
    }
    Ok(if trimmed.is_empty() { ".".to_string() } else { trimmed.to_string() })
}

fn canonical_value(v: &Value, root: &str, path_context: bool) -> Result<Value> {
    Ok(match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let mut out = Map::new();
            for k in keys {
                if TIMING_KEYS.contains(&k.as_str()) {
                    continue;
                }
                let is_path = PATH_KEYS.contains(&k.as_str());
                out.insert(k.clone(), canonical_value(&map[k], root, is_path)?);
            }
            Value::Object(out)
        }
        Value::Array(items) => {
            Value::Array(items.iter().map(|x| canonical_value(x, root, path_context)).collect::<Result<_>>()?)
        }
        Value::String(s) if path_context => Value::String(canonical_path(s, root)?),
        Value::String(s) => Value::String(relativize(s, root)),
        Value::Number(n) => Value::Number(canonical_number(n)),
        other => other.clone(),
    })
}

fn canonical_number(n: &Number) -> Number {
    if n.is_f64() {
        let f = n.as_f64().unwrap_or(0.0);
        if is_integral(f) {
            return Number::from(f as i64);
        }
    }
    n.clone()
}

fn is_integral(f: f64) -> bool {
    (-9.0e15..9.0e15).contains(&f) && f == (f as i64) as f64
}

fn value_is_canonical(v: &Value, path_context: bool) -> bool {
    match v {
        Value::Object(map) => {
            let keys: Vec<&String> = map.keys().collect();
            keys.windows(2).all(|w| w[0] < w[1])
                && map.iter().all(|(k, x)| {
                    !TIMING_KEYS.contains(&k.as_str()) && value_is_canonical(x, PATH_KEYS.contains(&k.as_str()))
                })
        }
        Value::Array(items) => items.iter().all(|x| value_is_canonical(x, path_context)),
        Value::String(s) if path_context => !is_absolute(s) && !s.contains('\\') && !s.starts_with("./"),
        Value::Number(n) => !(n.is_f64() && n.as_f64().is_some_and(is_integral)),
        _ => true,
    }
}

pub fn is_canonical(trace: &ToolCallTrace) -> bool {
    trace.entries.iter().enumerate().all(|(i, e)| e.seq == i as u64 && value_is_canonical(&e.canonical_args, false))
}

/// Compact JSON with recursively sorted keys.
pub fn canonical_json_bytes(v: &Value) -> Vec<u8> {
    let sorted = sort_keys(v);
    serde_json::to_vec(&sorted).expect("json values serialize")
}

fn sort_keys(v: &Value) -> Value {
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let mut out = Map::new();
            for k in keys {
                out.insert(k.clone(), sort_keys(&map[k]));
            }
            Value::Object(out)
        }
        Value::Array(items) => Value::Array(items.iter().map(sort_keys).collect()),
        other => other.clone(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    TraceDigest(Sha256::digest(bytes).into()).to_string()
}

/// 256-bit trace digest, serialized as lower-case hex.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TraceDigest(pub [u8; 32]);

impl fmt::Display for TraceDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for TraceDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TraceDigest({self})")
    }
}

impl TraceDigest {
    pub fn from_hex(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.len() != 64 || !s.is_ascii() {
            return Err(CoreError::Parse(format!("bad digest `{s}`")));
        }
        let mut out = [0u8; 32];
        for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
            let hex = core::str::from_utf8(chunk).map_err(|_| CoreError::Parse(s.to_string()))?;
            out[i] = u8::from_str_radix(hex, 16).map_err(|_| CoreError::Parse(s.to_string()))?;
        }
        Ok(TraceDigest(out))
    }
}

impl Serialize for TraceDigest {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TraceDigest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        TraceDigest::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Length-prefixed digest of the canonical entries; see the module docs.
pub fn trace_hash(trace: &ToolCallTrace) -> Result<TraceDigest> {
    if !is_canonical(trace) {
        return Err(CoreError::NonCanonical(
            "sequence numbers, key order, paths or timing fields are not canonical".into(),
        ));
    }
    let mut hasher = Sha256::new();
    hasher.update((trace.entries.len() as u64).to_be_bytes());
    for e in &trace.entries {
        let json = canonical_json_bytes(&serde_json::to_value(e).expect("entry serializes"));
        hasher.update((json.len() as u64).to_be_bytes());
        hasher.update(&json);
    }
    Ok(TraceDigest(hasher.finalize().into()))
}

/// First index at which the traces differ (ignoring `seq`), the shorter
/// length when one is a strict prefix of the other, or `None` when equal.
pub fn divergence_point(a: &ToolCallTrace, b: &ToolCallTrace) -> Option<usize> {
    let common = a.entries.len().min(b.entries.len());
    if let Some(i) = (0..common).find(|&i| !a.entries[i].same_action(&b.entries[i])) {
        return Some(i);
    }
    (a.entries.len() != b.entries.len()).then_some(common)
}

/// Stage, tool and strategy per entry; the control-flow shape of a trace.
pub fn skeleton(trace: &ToolCallTrace) -> Vec<(Option<StageId>, ToolKind, Option<StrategyId>)> {
    trace.entries.iter().map(|e| (e.stage_id, e.tool, e.strategy_id)).collect()
}
