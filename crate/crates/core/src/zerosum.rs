//! Exact solution of small zero-sum matrix games.
//!
//! Rows are the maximizer's pure strategies (outcomes), columns the
//! minimizer's (candidate forecasts). [`game_value`] returns the column
//! mixture minimizing the worst row payoff. The LP
//!
//! ```text
//! max 1'y  s.t.  A'y <= 1,  y >= 0,   A' = A + shift > 0
//! ```
//!
//! is solved with a dense tableau and Bland's rule; `lambda = y / 1'y` and the
//! row mixture is read off the slack reduced costs.

use thiserror::Error;

/// Default cap on rows and columns.
pub const DEFAULT_MAX_SIZE: usize = 64;

const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GameError {
    #[error("payoff matrix must be nonempty and rectangular")]
    BadShape,
    #[error("payoff matrix is {rows}x{cols}, cap is {cap}")]
    TooLarge { rows: usize, cols: usize, cap: usize },
    #[error("payoff entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("simplex solver did not converge after {0} pivots")]
    NumericalFailure(usize),
}

/// Dense row-major payoff matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl PayoffMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, GameError> {
        Self::with_cap(rows, DEFAULT_MAX_SIZE)
    }

    pub fn with_cap(rows: Vec<Vec<f64>>, cap: usize) -> Result<Self, GameError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
            return Err(GameError::BadShape);
        }
        if r > cap || c > cap {
            return Err(GameError::TooLarge { rows: r, cols: c, cap });
        }
        let entries: Vec<f64> = rows.into_iter().flatten().collect();
        Self::from_flat(r, c, entries)
    }

    /// Row-major constructor without the size cap check.
    pub fn from_flat(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self, GameError> {
        if rows == 0 || cols == 0 || entries.len() != rows * cols {
            return Err(GameError::BadShape);
        }
        if let Some(i) = entries.iter().position(|x| !x.is_finite()) {
            return Err(GameError::NonFinite {
                row: i / cols,
                col: i % cols,
            });
        }
        Ok(PayoffMatrix { rows, cols, entries })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries[r * self.cols + c]
    }

    pub fn transpose_neg(&self) -> PayoffMatrix {
        let mut entries = Vec::with_capacity(self.entries.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                entries.push(-self.get(r, c));
            }
        }
        PayoffMatrix {
            rows: self.cols,
            cols: self.rows,
            entries,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> PayoffMatrix {
        PayoffMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|&x| f(x)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameSolution {
    /// Minimizer's optimal mixture over columns.
    pub lambda: Vec<f64>,
    /// Maximizer's optimal mixture over rows (LP dual).
    pub row_mixture: Vec<f64>,
    /// `max_r (A lambda)_r`, evaluated at the returned `lambda`.
    pub value: f64,
}

/// Row of `A lambda` with the largest payoff; ties go to the lowest index.
pub fn best_response_row(a: &PayoffMatrix, lambda: &[f64]) -> Result<(usize, f64), GameError> {
    if lambda.len() != a.cols {
        return Err(GameError::DimensionMismatch {
            expected: a.cols,
            got: lambda.len(),
        });
    }
    let mut best = (0, f64::NEG_INFINITY);
    for r in 0..a.rows {
        let v: f64 = (0..a.cols).map(|c| a.get(r, c) * lambda[c]).sum();
        if v > best.1 {
            best = (r, v);
        }
    }
    Ok(best)
}

/// `min_lambda max_r (A lambda)_r` with an optimal column mixture.
pub fn game_value(a: &PayoffMatrix) -> Result<GameSolution, GameError> {
    let (r, c) = (a.rows, a.cols);
    if c == 1 {
        let (_, value) = best_response_row(a, &[1.0])?;
        let mut row_mixture = vec![0.0; r];
        row_mixture[best_response_row(a, &[1.0])?.0] = 1.0;
        return Ok(GameSolution {
            lambda: vec![1.0],
            row_mixture,
            value,
        });
    }

    // Optimal mixtures are invariant under positive scaling; normalizing to
    // unit magnitude keeps the absolute pivot tolerance meaningful.
    let norm = a.entries.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let norm = if norm > 0.0 { norm } else { 1.0 };
    let min = a.entries.iter().copied().fold(f64::INFINITY, f64::min) / norm;
    let shift = 1.0 - min;

    // Tableau: r constraint rows, c decision + r slack columns, RHS last.
    let width = c + r + 1;
    let mut t = vec![0.0; (r + 1) * width];
    for i in 0..r {
        for j in 0..c {
            t[i * width + j] = a.get(i, j) / norm + shift;
        }
        t[i * width + c + i] = 1.0;
        t[i * width + width - 1] = 1.0;
    }
    // Objective row holds reduced costs as -(c_j - z_j).
    for j in 0..c {
        t[r * width + j] = -1.0;
    }
    let mut basis: Vec<usize> = (c..c + r).collect();

    let max_pivots = 50 * (r + c) + 100;
    let mut pivots = 0;
    while let Some(enter) = (0..c + r).find(|&j| t[r * width + j] < -PIVOT_TOL) {
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..r {
            let coef = t[i * width + enter];
            if coef > PIVOT_TOL {
                let ratio = t[i * width + width - 1] / coef;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - 1e-15 || (ratio <= lr + 1e-15 && basis[i] < basis[li]) {
                            Some((i, ratio))
                        } else {
                            Some((li, lr))
                        }
                    }
                };
            }
        }
        // A' > 0 keeps the LP bounded, so a leaving row always exists.
        let Some((row, _)) = leave else {
            return Err(GameError::NumericalFailure(pivots));
        };
        pivot(&mut t, width, r + 1, row, enter);
        basis[row] = enter;
        pivots += 1;
        if pivots > max_pivots {
            return Err(GameError::NumericalFailure(pivots));
        }
    }

    let mut y = vec![0.0; c];
    for (i, &b) in basis.iter().enumerate() {
        if b < c {
            y[b] = t[i * width + width - 1].max(0.0);
        }
    }
    let ysum: f64 = y.iter().sum();
    if !(ysum > 0.0) {
        return Err(GameError::NumericalFailure(pivots));
    }
    let lambda: Vec<f64> = y.iter().map(|v| v / ysum).collect();

    let x: Vec<f64> = (0..r).map(|i| t[r * width + c + i].max(0.0)).collect();
    let xsum: f64 = x.iter().sum();
    let row_mixture = if xsum > 0.0 {
        x.iter().map(|v| v / xsum).collect()
    } else {
        vec![1.0 / r as f64; r]
    };

    let (_, value) = best_response_row(a, &lambda)?;
    Ok(GameSolution {
        lambda,
        row_mixture,
        value,
    })
}

fn pivot(t: &mut [f64], width: usize, nrows: usize, row: usize, col: usize) {
    let p = t[row * width + col];
    for j in 0..width {
        t[row * width + j] /= p;
    }
    for i in 0..nrows {
        if i == row {
            continue;
        }
        let f = t[i * width + col];
        if f != 0.0 {
            for j in 0..width {
                t[i * width + j] -= f * t[row * width + j];
            }
        }
    }
}

/// `max_x min_c (x'A)_c`, computed through the transposed game.
pub fn lower_value(a: &PayoffMatrix) -> Result<f64, GameError> {
    Ok(-game_value(&a.transpose_neg())?.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> PayoffMatrix {
        PayoffMatrix::new(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn matching_pennies() {
        let sol = game_value(&m(&[&[1.0, -1.0], &[-1.0, 1.0]])).unwrap();
        assert!((sol.lambda[0] - 0.5).abs() < 1e-12 && (sol.lambda[1] - 0.5).abs() < 1e-12);
        assert!(sol.value.abs() < 1e-12);
    }

    #[test]
    fn dominated_column() {
        let a = m(&[&[3.0, -0.5, 2.0], &[1.0, 0.0, 4.0]]);
        let sol = game_value(&a).unwrap();
        assert!(sol.value <= 0.0 + 1e-12);
        let (_, pure) = best_response_row(&a, &[0.0, 1.0, 0.0]).unwrap();
        assert!(pure <= 0.0 && sol.value <= pure + 1e-12);
    }

    #[test]
    fn one_by_one() {
        let sol = game_value(&m(&[&[0.0]])).unwrap();
        assert_eq!(sol.lambda, vec![1.0]);
        assert_eq!(sol.value, 0.0);
    }

    #[test]
    fn best_response_examples() {
        let a = m(&[&[1.0, -1.0], &[-1.0, 1.0]]);
        assert_eq!(best_response_row(&a, &[1.0, 0.0]).unwrap(), (0, 1.0));
        assert_eq!(best_response_row(&m(&[&[0.0]]), &[1.0]).unwrap(), (0, 0.0));
        assert!(matches!(
            best_response_row(&a, &[1.0]),
            Err(GameError::DimensionMismatch { expected: 2, got: 1 })
        ));
        let sol = game_value(&a).unwrap();
        assert!(best_response_row(&a, &sol.lambda).unwrap().1 <= sol.value + 1e-9);
    }

    #[test]
    fn rejects_bad_matrices() {
        assert_eq!(PayoffMatrix::new(vec![]), Err(GameError::BadShape));
        assert_eq!(
            PayoffMatrix::new(vec![vec![1.0], vec![1.0, 2.0]]),
            Err(GameError::BadShape)
        );
        assert_eq!(
            PayoffMatrix::new(vec![vec![1.0, f64::INFINITY]]),
            Err(GameError::NonFinite { row: 0, col: 1 })
        );
        assert!(matches!(
            PayoffMatrix::new(vec![vec![0.0; 65]]),
            Err(GameError::TooLarge { .. })
        ));
    }

    #[test]
    fn rock_paper_scissors() {
        let a = m(&[&[0.0, 1.0, -1.0], &[-1.0, 0.0, 1.0], &[1.0, -1.0, 0.0]]);
        let sol = game_value(&a).unwrap();
        assert!(sol.value.abs() < 1e-12);
        for l in &sol.lambda {
            assert!((l - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!(lower_value(&a).unwrap().abs() < 1e-12);
    }

    #[test]
    fn degenerate_ties_terminate() {
        let a = m(&[&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0], &[0.0, 0.0, 0.0]]);
        let sol = game_value(&a).unwrap();
        assert!((sol.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn huge_payoffs_are_solved_like_unit_ones() {
        let unit = [[-0.0625, 0.125], [0.9375, -0.875]];
        let s = 3.625286386251327e15;
        let a = m(&[&[unit[0][0] * s, unit[0][1] * s], &[unit[1][0] * s, unit[1][1] * s]]);
        let sol = game_value(&a).unwrap();
        assert!((sol.lambda[0] - 0.5).abs() < 1e-9);
        assert!((sol.value / s - 1.0 / 32.0).abs() < 1e-12);
    }
}
