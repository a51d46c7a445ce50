//! Randomized forecasts for the randomized game.
//!
//! The move is smeared with the hat-function partition of unity of a
//! triangulation, `S*(omega, p) = sum_v lambda_v(p) S(omega, v)`. When every
//! vertex `v` satisfies `sum_omega S(omega, v) u_omega < delta` for all `u` in
//! its star, `S* - delta` is a valid continuous move, so some cell's game on the
//! vertex payoffs has value at most `delta`. The forecast is that cell's
//! optimal vertex mixture, which has at most `M` support points and diameter at
//! most the cell's.

use std::sync::Arc;

use super::continuous::SearchRoute;
use super::sceptic::{expected_gain, payoff_scale};
use super::search::{CellCandidate, Grid, SearchConfig, TriangulationCache, Window};
use super::{DefensiveError, ScepticMove};
use crate::par::Execution;
use crate::simplex::{tv_diameter, ProbVector, Triangulation};

/// Mixture weights at or below this are dropped from the support.
pub const SUPPORT_TOL: f64 = 1e-12;

/// Default slack on the minimax bound `max_omega E_P S(omega, .) <= delta`.
///
/// `delta = eps 2^-n` drops below double resolution within a few dozen rounds,
/// after which only this slack separates an achievable bound from zero.
pub const DEFAULT_MINIMAX_SLACK: f64 = 1e-10;

/// `eps 2^-n`.
pub fn round_delta(eps: f64, n: u64) -> f64 {
    eps * 0.5f64.powf(n as f64)
}

/// A finitely supported distribution over forecasts.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomizedForecast {
    pub support: Vec<ProbVector>,
    pub weights: Vec<f64>,
    /// Subdivision order of the triangulation the cell came from.
    pub mesh_order: usize,
    pub cell: usize,
    /// Scale of the window the triangulation was mapped into (1 = global).
    pub window_scale: f64,
}

impl RandomizedForecast {
    /// A degenerate forecast concentrated on `p`.
    pub fn point_mass(p: ProbVector) -> Self {
        RandomizedForecast {
            support: vec![p],
            weights: vec![1.0],
            mesh_order: 0,
            cell: 0,
            window_scale: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn diameter(&self) -> f64 {
        tv_diameter(&self.support)
    }

    /// `max_omega sum_p P(p) S(omega, p)` given payoffs `payoffs[j][omega]`
    /// at the support points.
    pub fn minimax_lhs(&self, payoffs: &[Vec<f64>]) -> f64 {
        let m = payoffs.first().map_or(0, Vec::len);
        (0..m)
            .map(|omega| {
                self.weights
                    .iter()
                    .zip(payoffs)
                    .map(|(w, row)| w * row[omega])
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Forecaster's bet against the random number generator, one value per
/// support point of the forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct SideBet {
    pub values: Vec<f64>,
}

impl SideBet {
    /// `sum_p P(p) f(p)`.
    pub fn mean(&self, forecast: &RandomizedForecast) -> f64 {
        forecast.weights.iter().zip(&self.values).map(|(w, f)| w * f).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastDiagnostics {
    pub delta: f64,
    pub route: SearchRoute,
    /// Whether the smearing check held on the global triangulation used.
    pub smearing_certified: bool,
    pub cell_value: f64,
    /// `max_omega sum_p P(p) S(omega, p)` on the returned support.
    pub minimax_lhs: f64,
    pub support_size: usize,
    pub diameter: f64,
}

/// Piecewise-linear smearing of a move over a triangulation.
#[derive(Debug, Clone)]
pub struct Smeared {
    tri: Arc<Triangulation>,
    vertex_payoffs: Vec<Vec<f64>>,
    bound: f64,
}

impl Smeared {
    pub fn evaluate(&self, omega: usize, p: &ProbVector) -> f64 {
        self.payoffs(p)[omega]
    }

    pub fn payoffs(&self, p: &ProbVector) -> Vec<f64> {
        let loc = self.tri.locate_cell(p).expect("dimension checked at construction");
        let mut out = vec![0.0; self.tri.dim()];
        for (&v, &l) in self.tri.cells()[loc.cell].iter().zip(&loc.barycentric) {
            if l > 0.0 {
                for (o, s) in out.iter_mut().zip(&self.vertex_payoffs[v]) {
                    *o += l * s;
                }
            }
        }
        out
    }

    /// The smeared payoff as a move continuous in `p`.
    pub fn into_move(self) -> ScepticMove {
        let m = self.tri.dim();
        let bound = self.bound;
        ScepticMove::new(m, bound, super::Continuity::ContinuousInP, move |p, out| {
            out.copy_from_slice(&self.payoffs(p));
        })
    }
}

/// `S*(omega, p) = sum_v lambda_v(p) S(omega, v)`.
pub fn smear(s: &ScepticMove, tri: Arc<Triangulation>) -> Result<Smeared, DefensiveError> {
    if tri.dim() != s.outcomes() {
        return Err(DefensiveError::DimensionMismatch {
            expected: s.outcomes(),
            got: tri.dim(),
        });
    }
    let vertex_payoffs = tri.vertices().iter().map(|v| s.payoffs(v)).collect();
    Ok(Smeared {
        tri,
        vertex_payoffs,
        bound: s.bound(),
    })
}

/// True iff `sum_omega S(omega, v) u_omega < delta` for every vertex `v` and
/// every `u` in its star. The left side is linear in `u`, so the star's
/// vertices stand in for every point where `v`'s hat function is positive.
pub fn check_smearing_validity(
    s: &ScepticMove,
    tri: &Triangulation,
    delta: f64,
) -> Result<bool, DefensiveError> {
    if tri.dim() != s.outcomes() {
        return Err(DefensiveError::DimensionMismatch {
            expected: s.outcomes(),
            got: tri.dim(),
        });
    }
    let payoffs: Vec<Vec<f64>> = tri.vertices().iter().map(|v| s.payoffs(v)).collect();
    Ok(smearing_holds(tri, tri.vertices(), &payoffs, delta))
}

fn smearing_holds(tri: &Triangulation, points: &[ProbVector], payoffs: &[Vec<f64>], delta: f64) -> bool {
    (0..points.len()).all(|v| {
        tri.star_vertices(v)
            .expect("vertex in range")
            .into_iter()
            .all(|u| expected_gain(&payoffs[v], &points[u]) < delta)
    })
}

/// Forecast search settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastConfig {
    pub search: SearchConfig,
    pub minimax_slack: f64,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        ForecastConfig {
            search: SearchConfig::default(),
            minimax_slack: DEFAULT_MINIMAX_SLACK,
        }
    }
}

fn assemble(
    grid: &Grid,
    cand: &CellCandidate,
) -> (RandomizedForecast, Vec<Vec<f64>>) {
    let verts = &grid.tri.cells()[cand.cell];
    let kept: Vec<(usize, f64)> = verts
        .iter()
        .zip(&cand.lambda)
        .filter(|(_, &l)| l > SUPPORT_TOL)
        .map(|(&v, &l)| (v, l))
        .collect();
    let total: f64 = kept.iter().map(|(_, l)| l).sum();
    let forecast = RandomizedForecast {
        support: kept.iter().map(|&(v, _)| grid.points[v].clone()).collect(),
        weights: kept.iter().map(|&(_, l)| l / total).collect(),
        mesh_order: grid.tri.order(),
        cell: cand.cell,
        window_scale: grid.window.scale(),
    };
    let payoffs = kept.iter().map(|&(v, _)| grid.payoffs[v].clone()).collect();
    (forecast, payoffs)
}

/// Randomized forecast for round `n` with `delta = eps 2^-n`, support
/// diameter at most `eps_n` and `max_omega E_P S(omega, .) <= delta + slack`.
pub fn build_randomized_forecast(
    s: &ScepticMove,
    n: u64,
    eps: f64,
    eps_n: f64,
    cfg: &ForecastConfig,
    cache: &TriangulationCache,
) -> Result<(RandomizedForecast, ForecastDiagnostics), DefensiveError> {
    if !(eps > 0.0) || !(eps_n > 0.0) {
        return Err(DefensiveError::InvalidParameter("eps and eps_n must be positive"));
    }
    let m = s.outcomes();
    let delta = round_delta(eps, n);
    // The slack is relative to the payoff scale, like the validity slack.
    let target = delta + cfg.minimax_slack * s.bound().max(1.0);
    let search = &cfg.search;
    let orders = search.global_orders(m);
    let Some(&k_last) = orders.last() else {
        return Err(DefensiveError::RefinementExhausted {
            kmax: search.kmax,
            best: f64::INFINITY,
        });
    };
    let mut best = f64::INFINITY;

    let accept = |grid: &Grid,
                  cand: &CellCandidate,
                  route: SearchRoute,
                  smearing_certified: bool|
     -> Option<(RandomizedForecast, ForecastDiagnostics)> {
        if cand.value > target {
            return None;
        }
        let (forecast, payoffs) = assemble(grid, cand);
        let minimax_lhs = forecast.minimax_lhs(&payoffs);
        let diameter = forecast.diameter();
        let scale = payoffs.iter().map(|row| payoff_scale(row)).fold(1.0, f64::max);
        if minimax_lhs > delta + cfg.minimax_slack * scale || diameter > eps_n {
            return None;
        }
        let diagnostics = ForecastDiagnostics {
            delta,
            route,
            smearing_certified,
            cell_value: cand.value,
            minimax_lhs,
            support_size: forecast.len(),
            diameter,
        };
        Some((forecast, diagnostics))
    };

    let mut last: Option<(Grid, Vec<CellCandidate>)> = None;
    for &k in &orders {
        let tri = cache.get(m, k, search.max_vertices)?;
        let fine = tri.mesh_bound() <= eps_n;
        if !fine && k != k_last {
            continue;
        }
        let grid = Grid::evaluate(s, tri, Window::full(m), search.exec)?;
        let cands = grid.rank(search.candidates, search.exec)?;
        if fine {
            let certified = smearing_holds(&grid.tri, &grid.points, &grid.payoffs, delta);
            for cand in &cands {
                best = best.min(cand.value);
                if let Some(found) = accept(&grid, cand, SearchRoute::Global { k }, certified) {
                    return Ok(found);
                }
            }
        }
        last = Some((grid, cands));
    }

    let (grid, cands) = last.expect("the last global order is always evaluated");
    let zoom_k = SearchConfig::zoom_order(m);
    let tri = cache.get(m, zoom_k, search.max_vertices)?;
    for seed in &cands {
        best = best.min(seed.value);
        let mut center = grid.mixture_point(seed);
        let mut scale = (2.0 * m as f64 / k_last as f64).min(1.0);
        for level in 1..=search.zoom_levels {
            let zgrid = Grid::evaluate(s, tri.clone(), Window::centered(&center, scale), search.exec)?;
            let cand = zgrid.rank(1, search.exec)?.remove(0);
            best = best.min(cand.value);
            let route = SearchRoute::Zoom {
                k: zoom_k,
                levels: level,
                scale,
            };
            if let Some(found) = accept(&zgrid, &cand, route, false) {
                return Ok(found);
            }
            center = zgrid.mixture_point(&cand);
            scale *= 0.5;
            if scale < 1e-14 {
                break;
            }
        }
    }
    Err(DefensiveError::RefinementExhausted {
        kmax: search.kmax,
        best,
    })
}

/// `f(p) = (S(omega_n, p) - eps 2^-n) / (1 + eps)` on the support.
pub fn side_bet(
    s: &ScepticMove,
    omega_n: usize,
    forecast: &RandomizedForecast,
    eps: f64,
    n: u64,
) -> SideBet {
    let payoffs: Vec<f64> = forecast
        .support
        .iter()
        .map(|p| s.evaluate(omega_n, p))
        .collect();
    side_bet_from_payoffs(&payoffs, eps, n)
}

/// Side bet from `S(omega_n, p)` at each support point.
pub fn side_bet_from_payoffs(payoffs: &[f64], eps: f64, n: u64) -> SideBet {
    let delta = round_delta(eps, n);
    SideBet {
        values: payoffs.iter().map(|&v| (v - delta) / (1.0 + eps)).collect(),
    }
}

/// Rank cells of the global grid of order `k` directly (exposed for benches).
pub fn rank_global_cells(
    s: &ScepticMove,
    k: usize,
    count: usize,
    exec: Execution,
    cache: &TriangulationCache,
) -> Result<Vec<CellCandidate>, DefensiveError> {
    let m = s.outcomes();
    let tri = cache.get(m, k, crate::simplex::max_vertices())?;
    Grid::evaluate(s, tri, Window::full(m), exec)?.rank(count, exec)
}
