use std::fmt;
use std::sync::Arc;

use crate::simplex::ProbVector;

/// Slack allowed on the validity constraint and on declared bounds.
pub const VALIDITY_TOL: f64 = 1e-9;

/// How a move depends on the forecast argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Continuity {
    ContinuousInP,
    Arbitrary,
}

/// Fills `out[omega]` with the payoff for every outcome at forecast `p`.
pub type PayoffFn = dyn Fn(&ProbVector, &mut [f64]) + Send + Sync;

/// One announced Sceptic move `S(omega, p)` with its declared sup-bound.
#[derive(Clone)]
pub struct ScepticMove {
    outcomes: usize,
    bound: f64,
    continuity: Continuity,
    payoff: Arc<PayoffFn>,
}

impl fmt::Debug for ScepticMove {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScepticMove")
            .field("outcomes", &self.outcomes)
            .field("bound", &self.bound)
            .field("continuity", &self.continuity)
            .finish_non_exhaustive()
    }
}

impl ScepticMove {
    pub fn new<F>(outcomes: usize, bound: f64, continuity: Continuity, payoff: F) -> Self
    where
        F: Fn(&ProbVector, &mut [f64]) + Send + Sync + 'static,
    {
        ScepticMove {
            outcomes,
            bound,
            continuity,
            payoff: Arc::new(payoff),
        }
    }

    /// Build from a per-outcome function.
    pub fn from_fn<F>(outcomes: usize, bound: f64, continuity: Continuity, f: F) -> Self
    where
        F: Fn(usize, &ProbVector) -> f64 + Send + Sync + 'static,
    {
        Self::new(outcomes, bound, continuity, move |p, out| {
            for (omega, slot) in out.iter_mut().enumerate() {
                *slot = f(omega, p);
            }
        })
    }

    /// `S == 0`.
    pub fn zero(outcomes: usize) -> Self {
        Self::new(outcomes, 0.0, Continuity::ContinuousInP, |_, out| out.fill(0.0))
    }

    pub fn outcomes(&self) -> usize {
        self.outcomes
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn continuity(&self) -> Continuity {
        self.continuity
    }

    pub fn payoffs(&self, p: &ProbVector) -> Vec<f64> {
        let mut out = vec![0.0; self.outcomes];
        (self.payoff)(p, &mut out);
        out
    }

    pub fn evaluate(&self, omega: usize, p: &ProbVector) -> f64 {
        self.payoffs(p)[omega]
    }
}

/// Magnitude the validity slack scales with: `max(1, max_omega |S(omega, p)|)`.
///
/// Rounding error in payoffs is relative to their size; stakes that grow with
/// capital would otherwise trip an absolute slack on rounding noise alone.
pub fn payoff_scale(payoffs: &[f64]) -> f64 {
    payoffs.iter().fold(1.0, |acc, v| acc.max(v.abs()))
}

/// `sum_omega S(omega, p) q_omega`.
pub fn expected_gain(payoffs: &[f64], q: &ProbVector) -> f64 {
    payoffs.iter().zip(q.as_slice()).map(|(s, w)| s * w).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidityViolation {
    pub probe: usize,
    pub expected_gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundViolation {
    pub probe: usize,
    pub omega: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidityReport {
    pub probes: usize,
    pub violations: Vec<ValidityViolation>,
    pub bound_violations: Vec<BoundViolation>,
}

impl ValidityReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty() && self.bound_violations.is_empty()
    }
}

/// Checks the fairness constraint and the declared bound at a single point.
pub(crate) fn audit_point(
    s: &ScepticMove,
    probe: usize,
    p: &ProbVector,
    payoffs: &[f64],
    report: &mut ValidityReport,
) {
    report.probes += 1;
    let gain = expected_gain(payoffs, p);
    if !(gain <= VALIDITY_TOL * payoff_scale(payoffs)) {
        report.violations.push(ValidityViolation {
            probe,
            expected_gain: gain,
        });
    }
    for (omega, &v) in payoffs.iter().enumerate() {
        if !(v.abs() <= s.bound + VALIDITY_TOL * s.bound.max(1.0)) {
            report.bound_violations.push(BoundViolation { probe, omega, value: v });
        }
    }
}

/// Audit a move at every probe: expected gain under the probe must be at
/// most `1e-9` and every payoff within the declared bound.
pub fn audit_validity(s: &ScepticMove, probes: &[ProbVector]) -> ValidityReport {
    let mut report = ValidityReport::default();
    for (i, p) in probes.iter().enumerate() {
        let payoffs = s.payoffs(p);
        audit_point(s, i, p, &payoffs, &mut report);
    }
    report
}
