//! Allocation-only core of the dual-mode modernization orchestrator.
//!
//! Everything in this crate is a pure function over value types: the domain
//! model shared by both orchestration modes, gate predicates and the fixed
//! stage plan, canonical tool-call traces and their digests, output
//! comparison and computational accuracy, the harness report, and the
//! tail-risk and cost metrics. Process execution, the filesystem, model
//! backends and the CLI live in the `dualrun` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bytes;
pub mod compare;
pub mod error;
pub mod llm;
pub mod metrics;
pub mod model;
pub mod plan;
pub mod rational;
pub mod report;
pub mod tool;
pub mod trace;

pub use bytes::Bytes;
pub use error::{CoreError, Result};
pub use rational::Rational;

/// Schema version written into every persisted config, manifest and run record.
pub const SCHEMA_VERSION: &str = "v1";
