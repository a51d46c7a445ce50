//! Cell search over triangulated windows of the simplex.
//!
//! A [`Window`] is a scaled copy `offset + scale * simplex` of the simplex
//! lying inside it. A [`Grid`] is a triangulation mapped into a window together
//! with the Sceptic payoffs at its vertices. Ranking a grid solves, for each
//! cell, the zero-sum game whose rows are outcomes and whose columns are the
//! cell's vertices; its value is `min_lambda max_omega sum_v lambda_v S(omega, v)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use super::sceptic::{audit_point, ScepticMove, ValidityReport};
use super::DefensiveError;
use crate::par::Execution;
use crate::simplex::{self, tv_slices, ProbVector, SimplexError, Triangulation};
use crate::zerosum::{game_value, PayoffMatrix};

/// Knobs shared by the continuous solver and the randomized forecaster.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    /// First global subdivision order; doubled up to `kmax`.
    pub k0: usize,
    pub kmax: usize,
    pub max_vertices: usize,
    /// Maximum number of window halvings after the global stage.
    pub zoom_levels: usize,
    /// How many of the best global cells seed a zoom.
    pub candidates: usize,
    pub exec: Execution,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            k0: 2,
            kmax: 16,
            max_vertices: simplex::max_vertices(),
            zoom_levels: 80,
            candidates: 3,
            exec: Execution::default(),
        }
    }
}

impl SearchConfig {
    pub fn with_orders(k0: usize, kmax: usize) -> Self {
        SearchConfig {
            k0,
            kmax,
            ..SearchConfig::default()
        }
    }

    /// Global orders `k0, 2k0, ...` not exceeding `kmax` or the vertex cap.
    pub(crate) fn global_orders(&self, m: usize) -> Vec<usize> {
        let mut orders = Vec::new();
        let mut k = self.k0.max(1);
        while k <= self.kmax.max(self.k0) {
            if simplex::vertex_count(m, k) > self.max_vertices as u128 {
                break;
            }
            orders.push(k);
            k *= 2;
        }
        orders
    }

    /// Subdivision order used inside zoom windows. Cells then span less than
    /// the distance from a window's centroid to its facets.
    pub(crate) fn zoom_order(m: usize) -> usize {
        2 * m + 2
    }
}

/// Memoizes triangulations by `(M, k)`.
#[derive(Debug, Default)]
pub struct TriangulationCache {
    inner: Mutex<HashMap<(usize, usize), Arc<Triangulation>>>,
}

impl TriangulationCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Process-wide cache.
    pub fn shared() -> &'static TriangulationCache {
        static SHARED: OnceLock<TriangulationCache> = OnceLock::new();
        SHARED.get_or_init(TriangulationCache::new)
    }

    pub fn get(&self, m: usize, k: usize, cap: usize) -> Result<Arc<Triangulation>, SimplexError> {
        if let Some(t) = self.inner.lock().unwrap().get(&(m, k)) {
            return Ok(Arc::clone(t));
        }
        let t = Arc::new(Triangulation::with_cap(m, k, cap)?);
        self.inner
            .lock()
            .unwrap()
            .entry((m, k))
            .or_insert_with(|| Arc::clone(&t));
        Ok(t)
    }
}

/// The set `offset + scale * simplex`.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    offset: Vec<f64>,
    scale: f64,
}

impl Window {
    pub fn full(m: usize) -> Self {
        Window {
            offset: vec![0.0; m],
            scale: 1.0,
        }
    }

    /// Window of the given scale with centroid at `center`, shifted back
    /// inside the simplex where needed. Always contains `center`.
    pub fn centered(center: &ProbVector, scale: f64) -> Self {
        let m = center.dim();
        let scale = scale.min(1.0);
        let mut offset: Vec<f64> = center
            .as_slice()
            .iter()
            .map(|&c| (c - scale / m as f64).max(0.0))
            .collect();
        let excess = offset.iter().sum::<f64>() - (1.0 - scale);
        if excess > 0.0 {
            let total: f64 = offset.iter().sum();
            if total > 0.0 {
                let keep = (total - excess).max(0.0) / total;
                for o in &mut offset {
                    *o *= keep;
                }
            }
        }
        Window { offset, scale }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn map(&self, v: &ProbVector) -> ProbVector {
        if self.scale == 1.0 {
            return v.clone();
        }
        let raw: Vec<f64> = self
            .offset
            .iter()
            .zip(v.as_slice())
            .map(|(o, x)| o + self.scale * x)
            .collect();
        ProbVector::new(&raw).expect("window points are in the simplex")
    }
}

/// A cell together with its optimal vertex mixture and game value.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCandidate {
    pub cell: usize,
    pub value: f64,
    /// Aligned with the cell's vertex list.
    pub lambda: Vec<f64>,
}

/// Triangulated window with Sceptic payoffs at every vertex.
#[derive(Debug, Clone)]
pub struct Grid {
    pub(crate) tri: Arc<Triangulation>,
    pub(crate) window: Window,
    pub(crate) points: Vec<ProbVector>,
    /// `payoffs[v][omega]`.
    pub(crate) payoffs: Vec<Vec<f64>>,
}

impl Grid {
    /// Evaluate `s` at every vertex; any validity or bound failure is an error.
    pub fn evaluate(
        s: &ScepticMove,
        tri: Arc<Triangulation>,
        window: Window,
        exec: Execution,
    ) -> Result<Self, DefensiveError> {
        let points: Vec<ProbVector> = tri.vertices().iter().map(|v| window.map(v)).collect();
        let payoffs = exec.map_slice(&points, |p| s.payoffs(p));
        let mut report = ValidityReport::default();
        for (i, (p, row)) in points.iter().zip(&payoffs).enumerate() {
            audit_point(s, i, p, row, &mut report);
        }
        if let Some(v) = report.violations.first() {
            return Err(DefensiveError::ValidityViolation {
                point: points[v.probe].as_slice().to_vec(),
                expected_gain: v.expected_gain,
            });
        }
        if let Some(b) = report.bound_violations.first() {
            return Err(DefensiveError::BoundViolation {
                point: points[b.probe].as_slice().to_vec(),
                omega: b.omega,
                value: b.value,
                bound: s.bound(),
            });
        }
        Ok(Grid {
            tri,
            window,
            points,
            payoffs,
        })
    }

    pub fn triangulation(&self) -> &Triangulation {
        &self.tri
    }

    pub fn points(&self) -> &[ProbVector] {
        &self.points
    }

    pub fn payoffs(&self) -> &[Vec<f64>] {
        &self.payoffs
    }

    pub fn cell_matrix(&self, cell: usize) -> PayoffMatrix {
        let verts = &self.tri.cells()[cell];
        let m = self.tri.dim();
        let mut entries = Vec::with_capacity(m * verts.len());
        for omega in 0..m {
            for &v in verts {
                entries.push(self.payoffs[v][omega]);
            }
        }
        PayoffMatrix::from_flat(m, verts.len(), entries).expect("finite payoffs")
    }

    /// Barycentric combination of the cell's vertices.
    pub fn mixture_point(&self, cand: &CellCandidate) -> ProbVector {
        let pts: Vec<&ProbVector> = self.tri.cells()[cand.cell]
            .iter()
            .map(|&v| &self.points[v])
            .collect();
        ProbVector::mixture(&pts, &cand.lambda).expect("cell vertices share a dimension")
    }

    pub fn cell_diameter(&self, cell: usize) -> f64 {
        let verts = &self.tri.cells()[cell];
        let mut diam: f64 = 0.0;
        for (i, &a) in verts.iter().enumerate() {
            for &b in &verts[i + 1..] {
                diam = diam.max(tv_slices(self.points[a].as_slice(), self.points[b].as_slice()));
            }
        }
        diam
    }

    /// The `count` cells of smallest game value, ascending (ties by index).
    ///
    /// A cell's value lies between `max_omega min_v S` and `min_v max_omega S`;
    /// cells whose lower bound exceeds the `count`-th smallest upper bound are
    /// never solved.
    pub fn rank(&self, count: usize, exec: Execution) -> Result<Vec<CellCandidate>, DefensiveError> {
        let cells = self.tri.cells();
        let m = self.tri.dim();
        let bounds: Vec<(f64, f64, usize)> = cells
            .iter()
            .map(|cell| {
                let mut lb = f64::NEG_INFINITY;
                for omega in 0..m {
                    let lo = cell
                        .iter()
                        .map(|&v| self.payoffs[v][omega])
                        .fold(f64::INFINITY, f64::min);
                    lb = lb.max(lo);
                }
                let mut ub = f64::INFINITY;
                let mut arg = 0;
                for (i, &v) in cell.iter().enumerate() {
                    let hi = self.payoffs[v].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    if hi < ub {
                        ub = hi;
                        arg = i;
                    }
                }
                (lb, ub, arg)
            })
            .collect();

        let count = count.max(1).min(cells.len());
        let mut ubs: Vec<f64> = bounds.iter().map(|b| b.1).collect();
        ubs.sort_by(f64::total_cmp);
        let threshold = ubs[count - 1];

        let open: Vec<usize> = (0..cells.len()).filter(|&c| bounds[c].0 <= threshold).collect();
        let solved = exec.map_slice(&open, |&c| -> Result<CellCandidate, DefensiveError> {
            let (lb, ub, arg) = bounds[c];
            let n = cells[c].len();
            if lb == ub {
                let mut lambda = vec![0.0; n];
                lambda[arg] = 1.0;
                return Ok(CellCandidate {
                    cell: c,
                    value: ub,
                    lambda,
                });
            }
            let sol = game_value(&self.cell_matrix(c))?;
            Ok(CellCandidate {
                cell: c,
                value: sol.value,
                lambda: sol.lambda,
            })
        });
        let mut solved = solved.into_iter().collect::<Result<Vec<_>, _>>()?;
        solved.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.cell.cmp(&b.cell)));
        solved.truncate(count);
        Ok(solved)
    }
}
