//! Model request/response types and token metering shared by every backend.

use alloc::string::String;
use alloc::vec::Vec;
use core::iter::Sum;
use core::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::bytes::Bytes;
use crate::error::{CoreError, Result};
use crate::rational::Rational;
use crate::tool::ToolRequest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    System,
    User,
    ToolResult,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: Bytes,
}

impl Message {
    pub fn new(role: Role, content: impl Into<Bytes>) -> Self {
        Self { role, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub prompt_bundle_id: String,
    pub messages: Vec<Message>,
    pub temperature: Rational,
    pub seed: u64,
    /// Completion cap derived from the remaining token budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_completion_tokens: Option<u64>,
}

impl ModelRequest {
    pub fn validate(&self) -> Result<()> {
        match self.messages.first() {
            None => Err(CoreError::InvalidRequest("messages must not be empty".into())),
            Some(m) if m.role != Role::System => {
                Err(CoreError::InvalidRequest("first message must have role SYSTEM".into()))
            }
            Some(_) if self.temperature.is_negative() => {
                Err(CoreError::InvalidRequest("temperature must be non-negative".into()))
            }
            Some(_) => Ok(()),
        }
    }

    /// Number of assistant turns already in the conversation.
    pub fn turn_index(&self) -> usize {
        self.messages.iter().filter(|m| m.role == Role::Assistant).count()
    }

    pub fn last_message(&self) -> &Message {
        self.messages.last().expect("validated request has messages")
    }

    pub fn prompt_bytes(&self) -> usize {
        self.messages.iter().map(|m| m.content.len()).sum()
    }
}

/// One edit to a workspace file. With `search` set the edit is a patch that
/// replaces the single occurrence of `search` by `content`; otherwise
/// `content` is the complete new file.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FileEdit {
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<String>,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModelAction {
    CodeEdit { edits: Vec<FileEdit> },
    ToolAction { request: ToolRequest },
    Finish { status: String },
}

impl ModelAction {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelAction::CodeEdit { .. } => "CODE_EDIT",
            ModelAction::ToolAction { .. } => "TOOL_ACTION",
            ModelAction::Finish { .. } => "FINISH",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub action: ModelAction,
    pub usage: TokenUsage,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenUsage {
    pub fn new(prompt_tokens: u64, completion_tokens: u64) -> Self {
        Self { prompt_tokens, completion_tokens }
    }

    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

impl Add for TokenUsage {
    type Output = TokenUsage;
    fn add(self, rhs: TokenUsage) -> TokenUsage {
        TokenUsage {
            prompt_tokens: self.prompt_tokens + rhs.prompt_tokens,
            completion_tokens: self.completion_tokens + rhs.completion_tokens,
        }
    }
}

impl AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: TokenUsage) {
        *self = *self + rhs;
    }
}

impl Sum for TokenUsage {
    fn sum<I: Iterator<Item = TokenUsage>>(iter: I) -> Self {
        iter.fold(TokenUsage::default(), Add::add)
    }
}

/// Token estimate used when a backend reports no usage: `ceil(bytes / 4)`.
pub fn estimate_tokens(content: &[u8]) -> u64 {
    (content.len() as u64).div_ceil(4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn estimate_examples() {
        assert_eq!(estimate_tokens(b""), 0);
        assert_eq!(estimate_tokens(b"a"), 1);
        assert_eq!(estimate_tokens(b"abcd"), 1);
        assert_eq!(estimate_tokens(b"abcde"), 2);
    }

    #[test]
    fn estimate_matches_reference_heuristic() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(17);
        for _ in 0..1000 {
            let len = rng.gen_range(0..2048usize);
            let s: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            // Reference: float ceiling of bytes / 4.
            let expected = libm_ceil(len as f64 / 4.0) as u64;
            assert_eq!(estimate_tokens(&s), expected);
        }
    }

    fn libm_ceil(x: f64) -> f64 {
        let t = x as u64 as f64;
        if t < x {
            t + 1.0
        } else {
            t
        }
    }

    proptest! {
        #[test]
        fn estimate_is_monotone(a in proptest::collection::vec(any::<u8>(), 0..300), b in proptest::collection::vec(any::<u8>(), 0..300)) {
            let mut ab = a.clone();
            ab.extend_from_slice(&b);
            prop_assert!(estimate_tokens(&ab) >= estimate_tokens(&a));
        }
    }

    #[test]
    fn request_validation() {
        let ok = ModelRequest {
            prompt_bundle_id: "p".into(),
            messages: alloc::vec![Message::new(Role::System, "sys"), Message::new(Role::User, "u")],
            temperature: Rational::zero(),
            seed: 1,
            max_completion_tokens: None,
        };
        assert!(ok.validate().is_ok());
        let mut bad = ok.clone();
        bad.messages.remove(0);
        assert!(bad.validate().is_err());
        bad.messages.clear();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn action_wire_form() {
        let r = ModelResponse { action: ModelAction::Finish { status: "done".into() }, usage: TokenUsage::new(3, 4) };
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(
            json,
            r#"{"action":{"kind":"FINISH","status":"done"},"usage":{"prompt_tokens":3,"completion_tokens":4}}"#
        );
    }
}
