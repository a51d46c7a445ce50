//! Geometry of the probability simplex over a finite outcome space.
//!
//! A [`ProbVector`] is a point of the simplex. A [`Triangulation`] is the
//! Kuhn/Freudenthal edgewise subdivision of order `k`: every vertex lies on
//! the lattice `{0, 1/k, ..., 1}` and every cell has exactly `M` vertices.
//! The barycentric coordinates returned by [`Triangulation::locate_cell`] are
//! the values of the piecewise-linear hat functions at a point, which makes a
//! triangulation a finite partition of unity on the simplex.
//!
//! Internally a point `p` is handled through its scaled suffix sums
//! `s_j = k * (p_j + ... + p_{M-1})` for `j = 1..M-1`. These satisfy
//! `k >= s_1 >= ... >= s_{M-1} >= 0`, and the standard Kuhn triangulation of
//! the unit cubes of `R^{M-1}` restricted to that region is the subdivision.

use std::collections::{BTreeSet, HashMap};
use std::sync::OnceLock;

use thiserror::Error;

/// Entries below this are rejected; entries in `[-NEGATIVE_TOL, 0)` are clamped.
pub const NEGATIVE_TOL: f64 = 1e-9;

/// Default cap on the number of vertices of a triangulation.
pub const DEFAULT_MAX_VERTICES: usize = 2_000_000;

/// Largest supported outcome-space size for triangulations.
pub const MAX_DIMENSION: usize = 8;

/// Barycentric weights at or below this are treated as boundary ties.
const TIE_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimplexError {
    #[error("entry {index} is negative ({value})")]
    NegativeMass { index: usize, value: f64 },
    #[error("total mass {0} is not positive")]
    ZeroMass(f64),
    #[error("entry {index} is not finite")]
    NonFinite { index: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("outcome space needs at least 2 elements and at most {max}, got {got}")]
    UnsupportedDimension { got: usize, max: usize },
    #[error("subdivision order must be at least 1")]
    ZeroOrder,
    #[error("triangulation would have {vertices} vertices (cap {cap})")]
    SizeOverflow { vertices: u128, cap: usize },
    #[error("vertex index {index} out of range ({len} vertices)")]
    IndexOutOfRange { index: usize, len: usize },
}

pub type Result<T> = std::result::Result<T, SimplexError>;

/// A point of the probability simplex: nonnegative weights summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Clamp tiny negative drift to zero and renormalize.
    pub fn new(raw: &[f64]) -> Result<Self> {
        let mut weights = Vec::with_capacity(raw.len());
        for (index, &value) in raw.iter().enumerate() {
            if !value.is_finite() {
                return Err(SimplexError::NonFinite { index });
            }
            if value < -NEGATIVE_TOL {
                return Err(SimplexError::NegativeMass { index, value });
            }
            weights.push(value.max(0.0));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(SimplexError::ZeroMass(total));
        }
        if total != 1.0 {
            for w in &mut weights {
                *w /= total;
            }
        }
        Ok(ProbVector(weights))
    }

    /// Point mass on outcome `j`.
    pub fn point_mass(m: usize, j: usize) -> Self {
        let mut weights = vec![0.0; m];
        weights[j] = 1.0;
        ProbVector(weights)
    }

    pub fn uniform(m: usize) -> Self {
        ProbVector(vec![1.0 / m as f64; m])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Convex combination `sum_i weights[i] * points[i]`.
    pub fn mixture(points: &[&ProbVector], weights: &[f64]) -> Result<Self> {
        let m = points.first().map_or(0, |p| p.dim());
        let mut acc = vec![0.0; m];
        for (p, &w) in points.iter().zip(weights) {
            if p.dim() != m {
                return Err(SimplexError::DimensionMismatch {
                    left: m,
                    right: p.dim(),
                });
            }
            for (a, &x) in acc.iter_mut().zip(p.as_slice()) {
                *a += w * x;
            }
        }
        ProbVector::new(&acc)
    }
}

impl std::ops::Index<usize> for ProbVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

fn check_dims(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(SimplexError::DimensionMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    Ok(())
}

/// Total variation distance, half the L1 distance.
pub fn tv_distance(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    check_dims(p.as_slice(), q.as_slice())?;
    Ok(tv_slices(p.as_slice(), q.as_slice()))
}

pub(crate) fn tv_slices(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Euclidean distance. Reporting only; the canonical metric is TV.
pub fn euclidean_distance(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    check_dims(p.as_slice(), q.as_slice())?;
    Ok(p.as_slice()
        .iter()
        .zip(q.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Maximum pairwise TV distance of a finite set of points.
pub fn tv_diameter(points: &[ProbVector]) -> f64 {
    let mut diam: f64 = 0.0;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            diam = diam.max(tv_slices(p.as_slice(), q.as_slice()));
        }
    }
    diam
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Number of vertices of the order-`k` subdivision of the `(m-1)`-simplex.
pub fn vertex_count(m: usize, k: usize) -> u128 {
    binomial((k + m - 1) as u128, (m - 1) as u128)
}

/// Number of cells of the order-`k` subdivision of the `(m-1)`-simplex.
pub fn cell_count(m: usize, k: usize) -> u128 {
    (k as u128).saturating_pow((m - 1) as u32)
}

/// Vertex cap taken from `DF_MAX_VERTICES`, falling back to the default.
pub fn max_vertices() -> usize {
    static CAP: OnceLock<usize> = OnceLock::new();
    *CAP.get_or_init(|| {
        std::env::var("DF_MAX_VERTICES")
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(DEFAULT_MAX_VERTICES)
    })
}

/// Edgewise subdivision of the simplex, with its vertex/cell incidence.
#[derive(Debug, Clone)]
pub struct Triangulation {
    dim: usize,
    order: usize,
    vertices: Vec<ProbVector>,
    lattice: Vec<Vec<u32>>,
    cells: Vec<Vec<usize>>,
    vertex_cells: Vec<Vec<usize>>,
    vertex_index: HashMap<Vec<u32>, usize>,
    cell_index: HashMap<Vec<usize>, usize>,
}

/// Result of [`Triangulation::locate_cell`]: the containing cell and the
/// barycentric weights of `p`, aligned with that cell's vertex list.
#[derive(Debug, Clone, PartialEq)]
pub struct Location {
    pub cell: usize,
    pub barycentric: Vec<f64>,
}

/// Order-`k` edgewise subdivision of the `(m-1)`-simplex, capped by
/// [`max_vertices`].
pub fn edgewise_subdivision(m: usize, k: usize) -> Result<Triangulation> {
    Triangulation::with_cap(m, k, max_vertices())
}

impl Triangulation {
    pub fn with_cap(m: usize, k: usize, cap: usize) -> Result<Self> {
        if !(2..=MAX_DIMENSION).contains(&m) {
            return Err(SimplexError::UnsupportedDimension {
                got: m,
                max: MAX_DIMENSION,
            });
        }
        if k == 0 {
            return Err(SimplexError::ZeroOrder);
        }
        let nv = vertex_count(m, k);
        if nv > cap as u128 {
            return Err(SimplexError::SizeOverflow { vertices: nv, cap });
        }
        let d = m - 1;

        let mut lattice = Vec::with_capacity(nv as usize);
        let mut current = vec![0u32; d];
        nonincreasing_sequences(k as u32, 0, &mut current, &mut lattice);
        let vertex_index: HashMap<Vec<u32>, usize> = lattice
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        let vertices = lattice.iter().map(|s| lattice_to_point(s, k)).collect();

        let perms = permutations(d);
        let mut cells = Vec::with_capacity(cell_count(m, k) as usize);
        let mut bases = Vec::new();
        let mut current = vec![0u32; d];
        nonincreasing_sequences(k as u32 - 1, 0, &mut current, &mut bases);
        for base in &bases {
            for perm in &perms {
                let admissible = (0..d.saturating_sub(1))
                    .all(|i| base[i] != base[i + 1] || perm_pos(perm, i) < perm_pos(perm, i + 1));
                if !admissible {
                    continue;
                }
                let mut v = base.clone();
                let mut cell = Vec::with_capacity(m);
                cell.push(vertex_index[&v]);
                for &axis in perm {
                    v[axis] += 1;
                    cell.push(vertex_index[&v]);
                }
                cells.push(cell);
            }
        }

        let mut vertex_cells = vec![Vec::new(); lattice.len()];
        let mut cell_index = HashMap::with_capacity(cells.len());
        for (c, cell) in cells.iter().enumerate() {
            for &v in cell {
                vertex_cells[v].push(c);
            }
            let mut key = cell.clone();
            key.sort_unstable();
            cell_index.insert(key, c);
        }

        Ok(Triangulation {
            dim: m,
            order: k,
            vertices,
            lattice,
            cells,
            vertex_cells,
            vertex_index,
            cell_index,
        })
    }

    /// Number of outcomes `M`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vertices(&self) -> &[ProbVector] {
        &self.vertices
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn cells_of_vertex(&self, v: usize) -> &[usize] {
        &self.vertex_cells[v]
    }

    /// Upper bound on the TV diameter of any cell, `(M-1)/k`.
    pub fn mesh_bound(&self) -> f64 {
        (self.dim - 1) as f64 / self.order as f64
    }

    /// Containing cell and barycentric weights of `p`.
    ///
    /// On a shared face the lowest-indexed cell containing `p` wins.
    pub fn locate_cell(&self, p: &ProbVector) -> Result<Location> {
        check_dims(p.as_slice(), &vec![0.0; self.dim])?;
        let k = self.order;
        let d = self.dim - 1;
        let kf = k as f64;
        let w = p.as_slice();

        let mut s = vec![0.0; d];
        let mut tail = 0.0;
        for j in (1..self.dim).rev() {
            tail += w[j];
            s[j - 1] = (kf * tail).clamp(0.0, kf);
        }
        let mut base = vec![0u32; d];
        let mut frac = vec![0.0; d];
        for j in 0..d {
            let fl = s[j].floor().min(kf - 1.0).max(0.0);
            base[j] = fl as u32;
            frac[j] = (s[j] - fl).clamp(0.0, 1.0);
        }
        let mut perm: Vec<usize> = (0..d).collect();
        perm.sort_by(|&a, &b| frac[b].total_cmp(&frac[a]).then(a.cmp(&b)));

        let mut lambda = Vec::with_capacity(self.dim);
        let mut chain = Vec::with_capacity(self.dim);
        let mut v = base.clone();
        chain.push(self.vertex_index[&v]);
        if d > 0 {
            lambda.push(1.0 - frac[perm[0]]);
        }
        for (i, &axis) in perm.iter().enumerate() {
            v[axis] += 1;
            chain.push(self.vertex_index[&v]);
            let next = perm.get(i + 1).map_or(0.0, |&a| frac[a]);
            lambda.push(frac[axis] - next);
        }

        // Carrier face: the vertices with positive weight.
        let mut face: Vec<(usize, f64)> = chain
            .iter()
            .zip(&lambda)
            .filter(|(_, &l)| l > TIE_TOL)
            .map(|(&vi, &l)| (vi, l))
            .collect();
        if face.is_empty() {
            face.push((chain[0], 1.0));
        }
        let total: f64 = face.iter().map(|(_, l)| l).sum();

        let cell = if face.len() == self.dim {
            let mut key = chain.clone();
            key.sort_unstable();
            self.cell_index[&key]
        } else {
            let mut candidates: BTreeSet<usize> =
                self.vertex_cells[face[0].0].iter().copied().collect();
            for &(vi, _) in &face[1..] {
                let here: BTreeSet<usize> = self.vertex_cells[vi].iter().copied().collect();
                candidates = candidates.intersection(&here).copied().collect();
            }
            *candidates
                .iter()
                .next()
                .expect("carrier face belongs to at least one cell")
        };

        let barycentric = self.cells[cell]
            .iter()
            .map(|vi| {
                face.iter()
                    .find(|(f, _)| f == vi)
                    .map_or(0.0, |(_, l)| l / total)
            })
            .collect();
        Ok(Location { cell, barycentric })
    }

    /// All vertices sharing a cell with `v`, including `v`, sorted.
    pub fn star_vertices(&self, v: usize) -> Result<Vec<usize>> {
        if v >= self.vertices.len() {
            return Err(SimplexError::IndexOutOfRange {
                index: v,
                len: self.vertices.len(),
            });
        }
        let star: BTreeSet<usize> = self.vertex_cells[v]
            .iter()
            .flat_map(|&c| self.cells[c].iter().copied())
            .collect();
        Ok(star.into_iter().collect())
    }

    /// Integer suffix-sum coordinates of vertex `v`.
    pub fn lattice_point(&self, v: usize) -> &[u32] {
        &self.lattice[v]
    }
}

fn perm_pos(perm: &[usize], axis: usize) -> usize {
    perm.iter().position(|&a| a == axis).unwrap()
}

fn lattice_to_point(s: &[u32], k: usize) -> ProbVector {
    let m = s.len() + 1;
    let kf = k as f64;
    let mut w = Vec::with_capacity(m);
    w.push((k as u32 - s.first().copied().unwrap_or(0)) as f64 / kf);
    for j in 0..s.len() {
        let next = s.get(j + 1).copied().unwrap_or(0);
        w.push((s[j] - next) as f64 / kf);
    }
    ProbVector(w)
}

/// Pushes every nonincreasing sequence `top >= s_0 >= s_1 >= ... >= 0`.
fn nonincreasing_sequences(top: u32, pos: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if pos == current.len() {
        out.push(current.clone());
        return;
    }
    let upper = if pos == 0 { top } else { current[pos - 1] };
    for value in 0..=upper {
        current[pos] = value;
        nonincreasing_sequences(top, pos + 1, current, out);
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(rest: &mut Vec<usize>, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest.is_empty() {
            out.push(current.clone());
            return;
        }
        for i in 0..rest.len() {
            let x = rest.remove(i);
            current.push(x);
            go(rest, current, out);
            current.pop();
            rest.insert(i, x);
        }
    }
    let mut out = Vec::new();
    go(&mut (0..n).collect(), &mut Vec::new(), &mut out);
    out
}
