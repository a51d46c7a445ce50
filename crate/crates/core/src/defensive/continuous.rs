//! Deterministic forecasts for the continuous game.
//!
//! For a move continuous in `p`, a forecast `p*` with `S(omega, p*) <= 0` for
//! every outcome exists. The solver looks for one numerically: it solves the
//! cell games of the piecewise-linear interpolant on a global subdivision,
//! turns the best cell's mixture into a candidate forecast, and certifies the
//! candidate against the true move. Uncertified candidates are refined inside
//! shrinking windows around them.

use serde::{Deserialize, Serialize};

use super::search::{Grid, SearchConfig, TriangulationCache, Window};
use super::{DefensiveError, ScepticMove};
use crate::simplex::ProbVector;

/// Per-round tolerance for the continuous game. Each schedule sums to at most
/// `eps_c` over all rounds, which bounds Sceptic's total gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TolSchedule {
    /// `eps_c * 2^-n`. Falls below double resolution after a few dozen rounds.
    Geometric,
    /// `eps_c * 6 / (pi^2 n^2)`.
    InverseSquare,
}

impl TolSchedule {
    pub fn tol(self, eps_c: f64, n: u64) -> f64 {
        let n = n.max(1) as f64;
        match self {
            TolSchedule::Geometric => eps_c * 0.5f64.powf(n),
            TolSchedule::InverseSquare => eps_c * 6.0 / (std::f64::consts::PI.powi(2) * n * n),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TolSchedule::Geometric => "geometric",
            TolSchedule::InverseSquare => "inverse_square",
        }
    }
}

/// How the accepted cell was found.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchRoute {
    Global { k: usize },
    Zoom { k: usize, levels: usize, scale: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousSolution {
    pub forecast: ProbVector,
    /// `max_omega S(omega, forecast)`, evaluated on the true move.
    pub certified_max: f64,
    pub route: SearchRoute,
}

fn certify(s: &ScepticMove, p: &ProbVector) -> f64 {
    s.payoffs(p).into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Solve with default search settings and the given global orders.
pub fn solve_continuous(
    s: &ScepticMove,
    tol: f64,
    k0: usize,
    kmax: usize,
) -> Result<ContinuousSolution, DefensiveError> {
    solve_continuous_with(
        s,
        tol,
        &SearchConfig::with_orders(k0, kmax),
        TriangulationCache::shared(),
    )
}

/// Find `p*` with `max_omega S(omega, p*) <= tol`.
pub fn solve_continuous_with(
    s: &ScepticMove,
    tol: f64,
    cfg: &SearchConfig,
    cache: &TriangulationCache,
) -> Result<ContinuousSolution, DefensiveError> {
    if !(tol > 0.0) {
        return Err(DefensiveError::InvalidParameter("tol must be positive"));
    }
    let m = s.outcomes();
    let orders = cfg.global_orders(m);
    let Some(&k_last) = orders.last() else {
        return Err(DefensiveError::RefinementExhausted {
            kmax: cfg.kmax,
            best: f64::INFINITY,
        });
    };
    let mut best = f64::INFINITY;
    let mut seeds = Vec::new();

    for &k in &orders {
        let tri = cache.get(m, k, cfg.max_vertices)?;
        let grid = Grid::evaluate(s, tri, Window::full(m), cfg.exec)?;
        let cands = grid.rank(cfg.candidates, cfg.exec)?;
        seeds.clear();
        for cand in &cands {
            let p = grid.mixture_point(cand);
            let cm = certify(s, &p);
            best = best.min(cm);
            if cm <= tol {
                return Ok(ContinuousSolution {
                    forecast: p,
                    certified_max: cm,
                    route: SearchRoute::Global { k },
                });
            }
            seeds.push(p);
        }
    }

    let zoom_k = SearchConfig::zoom_order(m);
    let tri = cache.get(m, zoom_k, cfg.max_vertices)?;
    for seed in seeds {
        let mut center = seed;
        let mut scale = (2.0 * m as f64 / k_last as f64).min(1.0);
        for level in 1..=cfg.zoom_levels {
            let grid = Grid::evaluate(s, tri.clone(), Window::centered(&center, scale), cfg.exec)?;
            let cand = grid.rank(1, cfg.exec)?.remove(0);
            let p = grid.mixture_point(&cand);
            let cm = certify(s, &p);
            best = best.min(cm);
            if cm <= tol {
                return Ok(ContinuousSolution {
                    forecast: p,
                    certified_max: cm,
                    route: SearchRoute::Zoom {
                        k: zoom_k,
                        levels: level,
                        scale,
                    },
                });
            }
            center = p;
            scale *= 0.5;
            if scale < 1e-14 {
                break;
            }
        }
    }
    Err(DefensiveError::RefinementExhausted { kmax: cfg.kmax, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defensive::Continuity;

    #[test]
    fn zero_move_any_forecast() {
        let sol = solve_continuous(&ScepticMove::zero(3), 1e-6, 2, 8).unwrap();
        assert_eq!(sol.certified_max, 0.0);
    }

    #[test]
    fn binary_linear_move_forces_outcome_one() {
        let tol = 1e-3;
        let s = ScepticMove::from_fn(2, 1.0, Continuity::ContinuousInP, |w, p| {
            (w == 1) as u8 as f64 - p[1]
        });
        let sol = solve_continuous(&s, tol, 2, 16).unwrap();
        assert!(sol.forecast[1] >= 1.0 - tol);
        assert!(sol.certified_max <= tol);
    }

    #[test]
    fn ternary_linear_move_forces_last_outcome() {
        let tol = 1e-3;
        let f = [0.0, 0.0, 1.0];
        let s = ScepticMove::from_fn(3, 1.0, Continuity::ContinuousInP, move |w, p| {
            f[w] - (0..3).map(|i| f[i] * p[i]).sum::<f64>()
        });
        let sol = solve_continuous(&s, tol, 2, 16).unwrap();
        assert!(sol.forecast[2] >= 1.0 - tol);
    }

    #[test]
    fn interior_fixed_point_needs_zoom() {
        // S = g(p)_omega - g(p).p with g vanishing only at an irrational point.
        let target = [0.1 * std::f64::consts::SQRT_2, 1.0 - 0.1 * std::f64::consts::SQRT_2];
        let s = ScepticMove::from_fn(2, 2.0, Continuity::ContinuousInP, move |w, p| {
            let g0 = (1.5 * (target[0] - p[0])).sin();
            let g = [g0, -g0];
            g[w] - (g[0] * p[0] + g[1] * p[1])
        });
        let sol = solve_continuous(&s, 1e-9, 2, 8).unwrap();
        assert!(sol.certified_max <= 1e-9);
        assert!(matches!(sol.route, SearchRoute::Zoom { .. }), "{sol:?}");
        assert!((sol.forecast[0] - target[0]).abs() < 1e-6);
    }

    #[test]
    fn schedules_are_summable() {
        for sched in [TolSchedule::Geometric, TolSchedule::InverseSquare] {
            let total: f64 = (1..=100_000).map(|n| sched.tol(0.01, n)).sum();
            assert!(total < 0.01);
        }
        assert_eq!(TolSchedule::Geometric.tol(0.01, 1), 0.005);
    }

    #[test]
    fn rejects_nonpositive_tol() {
        assert!(matches!(
            solve_continuous(&ScepticMove::zero(2), 0.0, 2, 8),
            Err(DefensiveError::InvalidParameter(_))
        ));
    }
}
