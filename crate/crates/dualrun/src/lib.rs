//! Runtime side of the dual-mode modernization orchestrator: the sandboxed
//! tool set, model backends, both orchestration engines, the evaluation
//! harness and the batch driver behind the `dualrun` binary.

pub mod batch;
pub mod fixtures;
pub mod gateway;
pub mod harness;
pub mod orchestrate;
pub mod reporting;
pub mod sandbox;
pub mod tools;
