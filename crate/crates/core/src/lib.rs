//! Trajectory purification for tool-using agents trained with group-relative
//! policy optimization, over a small deterministic interpreter.
//!
//! The pieces, bottom-up:
//!
//! * [`minilang`]: the sandboxed interpreter that stands in for code execution;
//! * [`trajectory`]: turns, observations, trajectories and their JSONL format;
//! * [`similarity`]: the gestalt matching ratio used to grade repairs;
//! * [`tasks`], [`templates`], [`policy`]: the task distribution and a
//!   factored-categorical agent with exact log-probs and gradients;
//! * [`rollout`]: baseline episodes;
//! * [`saar`]: lookahead correction, adaptive replacement, offline purification
//!   and log-prob recomputation;
//! * [`grpo`]: rewards, advantages, the clipped objective and the update;
//! * [`harness`]: configuration, the training loop, evaluation and reports.

pub mod error;
pub mod grpo;
pub mod harness;
pub mod minilang;
pub mod par;
pub mod policy;
pub mod rollout;
pub mod saar;
pub mod similarity;
pub mod tasks;
pub mod templates;
pub mod trajectory;

pub use error::{Error, Result};
