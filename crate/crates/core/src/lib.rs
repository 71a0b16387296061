//! Modular adaptive control of uncertain feedback-linearizable systems.
//!
//! The controller side is a robust feedback-linearizing law whose tracking-error
//! dynamics are input-to-state stable with respect to the parameter-estimation
//! error. The estimation side is pluggable: a multi-parametric extremum-seeking
//! loop ([`mes`]) or a GP-UCB Bayesian-optimization loop ([`gpucb`]) adjusts the
//! uncertainty estimate between episodes by descending a measured tracking cost.
//!
//! The [`plant`] module provides the two-link manipulator used as the demo
//! system, [`harness`] runs closed-loop episodes and the outer learning loops,
//! and the `modac` CLI (separate crate) exposes everything as subcommands.

// Validation deliberately writes `!(x > 0.0)` so NaN fails the check; the
// suggested `x <= 0.0` would let NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod error;
pub mod gpucb;
pub mod harness;
pub mod linear;
pub mod mes;
pub mod plant;
pub mod trajectory;

pub use error::{Error, Result};
