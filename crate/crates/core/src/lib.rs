//! Online resource allocation with two-sided (lower and upper) resource
//! constraints.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: instances, request streams, realized allocation outcomes.
//! * [`lp`]: a dense two-phase simplex with dual multipliers.
//! * [`offline`]: exact oracles (expected problem `E(β)`, measure of
//!   feasibility, factor-revealing bound, granularity parameters, tiny-`T`
//!   integer optimum).
//! * [`estimators`]: sample-based estimates of `W_β` and of the measure of
//!   feasibility, plus per-stage error parameters.
//! * [`online`]: the randomized rounding policy and the three
//!   potential-function algorithms.
//! * [`harness`]: Monte Carlo experiments and report emission.

#![allow(clippy::needless_range_loop)]

pub mod estimators;
pub mod harness;
pub mod lp;
pub mod model;
pub mod offline;
pub mod online;

pub use model::{AllocationOutcome, Instance, RequestStream, ValidationReport};
