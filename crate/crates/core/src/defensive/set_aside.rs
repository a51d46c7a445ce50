//! Banking combinator: turns a strategy whose capital is unbounded into one
//! whose capital tends to infinity.
//!
//! The underlying strategy starts with capital 1 and is played at scale
//! `c`, so the working capital is `W = c * U` where `U` is the underlying
//! capital. Whenever `W` exceeds the threshold, one unit moves to the reserve
//! `R` and `c` shrinks by `(W - 1) / W`, so play continues from `W - 1`.

use thiserror::Error;

pub const DEFAULT_THRESHOLD: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SetAsideError {
    #[error("underlying capital {capital} is negative at round {round}")]
    NegativeCapital { round: usize, capital: f64 },
    #[error("threshold must exceed 1, got {0}")]
    BadThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetAsideState {
    pub working: f64,
    pub reserve: f64,
}

#[derive(Debug, Clone)]
pub struct SetAside {
    threshold: f64,
    underlying: f64,
    scale: f64,
    working: f64,
    reserve: f64,
    round: usize,
}

impl Default for SetAside {
    fn default() -> Self {
        Self::new(DEFAULT_THRESHOLD).expect("default threshold exceeds 1")
    }
}

impl SetAside {
    pub fn new(threshold: f64) -> Result<Self, SetAsideError> {
        if !(threshold > 1.0) {
            return Err(SetAsideError::BadThreshold(threshold));
        }
        Ok(SetAside {
            threshold,
            underlying: 1.0,
            scale: 1.0,
            working: 1.0,
            reserve: 0.0,
            round: 0,
        })
    }

    pub fn state(&self) -> SetAsideState {
        SetAsideState {
            working: self.working,
            reserve: self.reserve,
        }
    }

    /// Current multiplier applied to the underlying strategy's gains.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Apply one round's gain of the underlying strategy.
    pub fn push(&mut self, gain: f64) -> Result<SetAsideState, SetAsideError> {
        self.round += 1;
        self.underlying += gain;
        if self.underlying < -1e-12 {
            return Err(SetAsideError::NegativeCapital {
                round: self.round,
                capital: self.underlying,
            });
        }
        self.working += self.scale * gain;
        while self.working > self.threshold {
            let reduced = self.working - 1.0;
            self.scale *= reduced / self.working;
            self.working = reduced;
            self.reserve += 1.0;
        }
        Ok(self.state())
    }
}

/// Run the combinator over a stream of per-round gains.
pub fn set_aside_transform<I>(gains: I) -> Result<Vec<SetAsideState>, SetAsideError>
where
    I: IntoIterator<Item = f64>,
{
    let mut sa = SetAside::default();
    gains.into_iter().map(|g| sa.push(g)).collect()
}

/// Per-round gains of a capital path that starts at 1.
pub fn gains_from_path(path: &[f64]) -> Vec<f64> {
    let mut prev = 1.0;
    path.iter()
        .map(|&c| {
            let g = c - prev;
            prev = c;
            g
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_capital_never_banks() {
        let out = set_aside_transform(vec![0.0; 50]).unwrap();
        assert!(out.iter().all(|s| s.working == 1.0 && s.reserve == 0.0));
    }

    #[test]
    fn doubling_capital_banks_every_round_from_two() {
        // Capital path 2, 4, 8, ... after the initial 1.
        let path: Vec<f64> = (1..=10).map(|i| 2f64.powi(i)).collect();
        let out = set_aside_transform(gains_from_path(&path)).unwrap();
        assert_eq!(out[0].reserve, 0.0);
        for w in out.windows(2) {
            assert!(w[1].reserve > w[0].reserve);
        }
        assert!(out[9].reserve >= 8.0);
    }

    #[test]
    fn one_trigger_by_hand() {
        let mut sa = SetAside::default();
        let s = sa.push(2.0).unwrap();
        assert_eq!(s, SetAsideState { working: 2.0, reserve: 1.0 });
        assert!((sa.scale() - 2.0 / 3.0).abs() < 1e-15);
        // Gain 0.3 at scale 2/3 lifts W to 2.2, which banks again.
        let s = sa.push(0.3).unwrap();
        assert_eq!(s.reserve, 2.0);
        assert!((s.working - 1.2).abs() < 1e-12);
        assert!((sa.scale() - 2.0 / 3.0 * 1.2 / 2.2).abs() < 1e-12);
    }

    #[test]
    fn working_capital_tracks_scaled_underlying() {
        let gains = [0.5, 1.0, -0.7, 2.5, -1.0, 3.0];
        let mut sa = SetAside::default();
        let mut u = 1.0;
        for g in gains {
            u += g;
            let s = sa.push(g).unwrap();
            assert!((s.working - sa.scale() * u).abs() < 1e-12);
            assert!(s.working <= DEFAULT_THRESHOLD);
        }
    }

    #[test]
    fn negative_underlying_is_rejected() {
        assert_eq!(
            set_aside_transform([0.5, -2.0]).unwrap_err(),
            SetAsideError::NegativeCapital {
                round: 2,
                capital: -0.5
            }
        );
        assert!(SetAside::new(1.0).is_err());
    }
}
