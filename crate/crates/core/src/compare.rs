//! Output equivalence between a translated program and its reference, and
//! the per-run accuracy and success judgements built on it.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::bytes::Bytes;
use crate::error::{CoreError, Result};
use crate::model::RunRecord;
use crate::rational::Rational;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub exit_code: i32,
    pub stdout: Bytes,
    pub stderr: Bytes,
    /// Files created under the declared output directory, keyed by
    /// directory-relative path.
    pub produced_files: BTreeMap<String, Bytes>,
    pub timed_out: bool,
}

/// Textual tolerance applied before byte comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizationPolicy {
    pub crlf_to_lf: bool,
    pub strip_trailing_whitespace: bool,
    pub strip_trailing_blank_lines: bool,
    pub compare_stderr: bool,
}

impl Default for NormalizationPolicy {
    fn default() -> Self {
        Self {
            crlf_to_lf: true,
            strip_trailing_whitespace: true,
            strip_trailing_blank_lines: true,
            compare_stderr: false,
        }
    }
}

impl NormalizationPolicy {
    /// No textual tolerance at all; stderr still excluded.
    pub fn bit_exact() -> Self {
        Self {
            crlf_to_lf: false,
            strip_trailing_whitespace: false,
            strip_trailing_blank_lines: false,
            compare_stderr: false,
        }
    }
}

fn is_line_space(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | 0x0b | 0x0c | b'\r')
}

pub fn normalize(bytes: &[u8], policy: &NormalizationPolicy) -> Vec<u8> {
    let mut text: Vec<u8> = if policy.crlf_to_lf {
        let mut out = Vec::with_capacity(bytes.len());
        let mut i = 0;
        while i < bytes.len() {
            if bytes[i] == b'\r' && bytes.get(i + 1) == Some(&b'\n') {
                i += 1;
                continue;
            }
            out.push(bytes[i]);
            i += 1;
        }
        out
    } else {
        bytes.to_vec()
    };
    if policy.strip_trailing_whitespace {
        let mut out = Vec::with_capacity(text.len());
        for (i, line) in text.split(|&b| b == b'\n').enumerate() {
            if i > 0 {
                out.push(b'\n');
            }
            let end = line.iter().rposition(|&b| !is_line_space(b)).map_or(0, |p| p + 1);
            out.extend_from_slice(&line[..end]);
        }
        text = out;
    }
    if policy.strip_trailing_blank_lines {
        while let Some(&last) = text.last() {
            let tail_is_blank = last == b'\n' || (policy.strip_trailing_whitespace && is_line_space(last));
            if !tail_is_blank {
                break;
            }
            text.pop();
        }
    }
    text
}

/// Normalized stdout, exit code and produced files must all agree; stderr
/// only when the policy says so. A timed-out outcome never equals anything.
pub fn outcomes_equal(a: &ExecutionOutcome, b: &ExecutionOutcome, policy: &NormalizationPolicy) -> bool {
    if a.timed_out || b.timed_out {
        return false;
    }
    if a.exit_code != b.exit_code {
        return false;
    }
    let same = |x: &[u8], y: &[u8]| normalize(x, policy) == normalize(y, policy);
    if !same(&a.stdout, &b.stdout) {
        return false;
    }
    if policy.compare_stderr && !same(&a.stderr, &b.stderr) {
        return false;
    }
    a.produced_files.len() == b.produced_files.len()
        && a.produced_files.iter().zip(b.produced_files.iter()).all(|((ka, va), (kb, vb))| ka == kb && same(va, vb))
}

/// `matches / tests`, exactly.
pub fn accuracy_from_matches(matches: &[bool]) -> Result<Rational> {
    if matches.is_empty() {
        return Err(CoreError::EmptyTests);
    }
    let passed = matches.iter().filter(|m| **m).count() as u64;
    Ok(Rational::ratio(passed, matches.len() as u64))
}

/// CA over paired (generated, reference) outcomes, one pair per test.
pub fn computational_accuracy<'a, I>(pairs: I, policy: &NormalizationPolicy) -> Result<Rational>
where
    I: IntoIterator<Item = (&'a ExecutionOutcome, &'a ExecutionOutcome)>,
{
    let matches: Vec<bool> = pairs.into_iter().map(|(g, r)| outcomes_equal(g, r, policy)).collect();
    accuracy_from_matches(&matches)
}

/// Success requires no recorded failure and every test passing.
pub fn is_successful_run(record: &RunRecord) -> bool {
    record.error.is_none() && record.ca.as_ref().is_some_and(Rational::is_one)
}
