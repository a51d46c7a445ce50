//! Forecaster's side of both games.

mod continuous;
mod randomized;
mod sceptic;
mod search;
mod set_aside;

use thiserror::Error;

use crate::simplex::SimplexError;
use crate::zerosum::GameError;

pub use continuous::{
    solve_continuous, solve_continuous_with, ContinuousSolution, SearchRoute, TolSchedule,
};
pub use randomized::{
    build_randomized_forecast, check_smearing_validity, rank_global_cells, round_delta, side_bet,
    side_bet_from_payoffs, smear, ForecastConfig, ForecastDiagnostics, RandomizedForecast,
    SideBet, Smeared, DEFAULT_MINIMAX_SLACK, SUPPORT_TOL,
};
pub use sceptic::{
    audit_validity, expected_gain, payoff_scale, BoundViolation, Continuity, PayoffFn, ScepticMove,
    ValidityReport, ValidityViolation, VALIDITY_TOL,
};
pub use search::{CellCandidate, Grid, SearchConfig, TriangulationCache, Window};
pub use set_aside::{
    gains_from_path, set_aside_transform, SetAside, SetAsideError, SetAsideState,
    DEFAULT_THRESHOLD,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DefensiveError {
    #[error(transparent)]
    Simplex(#[from] SimplexError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("no certified forecast up to kmax = {kmax} (best value {best})")]
    RefinementExhausted { kmax: usize, best: f64 },
    #[error("sceptic move has expected gain {expected_gain} at {point:?}")]
    ValidityViolation { point: Vec<f64>, expected_gain: f64 },
    #[error("sceptic payoff {value} for outcome {omega} at {point:?} exceeds bound {bound}")]
    BoundViolation {
        point: Vec<f64>,
        omega: usize,
        value: f64,
        bound: f64,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

impl DefensiveError {
    /// Whether the error is Sceptic's fault rather than the Forecaster's.
    pub fn is_sceptic_fault(&self) -> bool {
        matches!(
            self,
            DefensiveError::ValidityViolation { .. } | DefensiveError::BoundViolation { .. }
        )
    }
}
