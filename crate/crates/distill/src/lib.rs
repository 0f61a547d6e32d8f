//! Debate-driven data generation, trajectory extraction, dataset building and
//! training drivers on top of `debate-distill-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod cli;
pub mod client;
pub mod config;
pub mod dataset;
pub mod debate;
pub mod extract;
pub mod training;
