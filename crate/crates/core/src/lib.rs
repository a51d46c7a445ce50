//! Defensive forecasting over finite outcome spaces.
//!
//! Sceptic gambles against forecasts; Forecaster picks forecasts so that
//! Sceptic's capital cannot grow. This crate implements both varieties of the
//! game: the continuous one, where forecasts are deterministic and found as
//! numerical fixed points, and the randomized one, where forecasts are
//! finitely supported mixtures and Forecaster hedges with a side bet against
//! the random number generator.
//!
//! - [`simplex`]: probability vectors, TV distance, edgewise triangulations.
//! - [`zerosum`]: exact values of small zero-sum matrix games.
//! - [`defensive`]: the Forecaster's constructions.
//! - [`protocol`]: enforceable game state machines and the game runner.
//! - [`adversaries`]: Sceptic, Reality and random number generator strategies.
//! - [`transcript`]: JSONL transcripts and their independent verifier.
//! - [`scenario`]: configuration files and strategy spec strings.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversaries;
pub mod defensive;
pub mod par;
pub mod protocol;
pub mod scenario;
pub mod simplex;
pub mod transcript;
pub mod zerosum;

pub use defensive::{RandomizedForecast, ScepticMove, SideBet};
pub use par::Execution;
pub use simplex::{ProbVector, Triangulation};

/// Version string recorded in transcript headers.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
