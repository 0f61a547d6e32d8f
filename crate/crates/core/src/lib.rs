//! Allocation-only math core for distilling multi-agent debate traces.
//!
//! Everything here is pure: answer normalization and step segmentation,
//! the contrastive process reward model, group-relative and clipped policy
//! objectives over a toy autoregressive policy, and reasoning-token
//! perplexity. IO, transport and file formats live in the `debate-distill`
//! crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod domain;
pub mod eval;
pub mod math;
pub mod params;
pub mod policy;
pub mod reward;

pub use domain::{normalize_answer, segment_steps, AnswerError, NormalizedAnswer, Problem, ReasoningStep, TaskKind};
pub use params::{ParamVector, Segment};
