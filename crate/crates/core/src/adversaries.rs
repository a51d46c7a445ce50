//! Strategies that play against the Forecaster: Sceptics (test martingales),
//! Reality, and random number generator policies.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::defensive::{Continuity, RandomizedForecast, ScepticMove};
use crate::protocol::{Forecaster, ForecasterError, RoundContext, Sceptic};
use crate::simplex::ProbVector;
use crate::SideBet;

/// Cap on `|c|_inf` for the linear Sceptic.
pub const LINEAR_COEF_CAP: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StrategyError {
    #[error("strategy supports only {supported} outcomes, got {got}")]
    UnsupportedDimension { supported: &'static str, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("script exhausted after {0} outcomes")]
    ScriptExhausted(usize),
}

fn indicator(cond: bool) -> f64 {
    if cond {
        1.0
    } else {
        0.0
    }
}

/// `S(omega, p) = c_omega - c . p`, the same move every round.
#[derive(Debug, Clone)]
pub struct LinearSceptic {
    c: Vec<f64>,
}

pub fn linear_sceptic(c: Vec<f64>) -> Result<LinearSceptic, StrategyError> {
    if c.iter().any(|x| !x.is_finite() || x.abs() > LINEAR_COEF_CAP) {
        return Err(StrategyError::InvalidParameter(format!(
            "coefficients must be finite with |c| <= {LINEAR_COEF_CAP}"
        )));
    }
    Ok(LinearSceptic { c })
}

impl LinearSceptic {
    pub fn move_for(&self) -> ScepticMove {
        let c = self.c.clone();
        let bound = 2.0 * c.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        ScepticMove::new(c.len(), bound, Continuity::ContinuousInP, move |p, out| {
            let mean: f64 = c.iter().zip(p.as_slice()).map(|(a, b)| a * b).sum();
            for (o, ci) in out.iter_mut().zip(&c) {
                *o = ci - mean;
            }
        })
    }
}

impl Sceptic for LinearSceptic {
    fn name(&self) -> String {
        let cs: Vec<String> = self.c.iter().map(|x| x.to_string()).collect();
        format!("linear:c={}", cs.join(","))
    }

    fn next_move(&mut self, ctx: &RoundContext) -> Result<ScepticMove, StrategyError> {
        if self.c.len() != ctx.outcomes {
            return Err(StrategyError::InvalidParameter(format!(
                "{} coefficients for {} outcomes",
                self.c.len(),
                ctx.outcomes
            )));
        }
        Ok(self.move_for())
    }
}

/// Gaussian-kernel calibration test:
/// `S(omega, p) = eta * scale * sum_i K(p, p_i) (e_omega - p).(e_{omega_i} - p_i)`.
///
/// `scale` is set each round so that `|S| <= capital`, which keeps the
/// Sceptic's capital nonnegative.
#[derive(Debug, Clone)]
pub struct KernelSceptic {
    eta: f64,
    sigma: f64,
}

pub fn k29_kernel_sceptic(eta: f64, sigma: f64) -> Result<KernelSceptic, StrategyError> {
    if !(eta > 0.0) || !(sigma > 0.0) || !eta.is_finite() || !sigma.is_finite() {
        return Err(StrategyError::InvalidParameter("eta and sigma must be positive".into()));
    }
    Ok(KernelSceptic { eta, sigma })
}

impl KernelSceptic {
    pub fn move_for(&self, capital: f64, history: &[(ProbVector, usize)], m: usize) -> ScepticMove {
        if history.is_empty() || !(capital > 0.0) {
            return ScepticMove::zero(m);
        }
        let t = history.len() as f64;
        let cap_scale = capital / (2.0 * t * self.eta.max(1.0));
        let coef = self.eta * cap_scale;
        let bound = coef * 2.0 * t;
        let two_sigma_sq = 2.0 * self.sigma * self.sigma;
        // Precompute e_{omega_i} - p_i for every past round.
        let past: Arc<Vec<(Vec<f64>, Vec<f64>)>> = Arc::new(
            history
                .iter()
                .map(|(p, w)| {
                    let mut resid: Vec<f64> = p.as_slice().iter().map(|x| -x).collect();
                    resid[*w] += 1.0;
                    (p.as_slice().to_vec(), resid)
                })
                .collect(),
        );
        ScepticMove::new(m, bound, Continuity::ContinuousInP, move |p, out| {
            // g = sum_i K(p, p_i) (e_{omega_i} - p_i); S(omega) = coef (g_omega - g.p).
            let x = p.as_slice();
            let mut g = vec![0.0; x.len()];
            for (pi, resid) in past.iter() {
                let d2: f64 = x.iter().zip(pi).map(|(a, b)| (a - b) * (a - b)).sum();
                let k = (-d2 / two_sigma_sq).exp();
                for (gj, rj) in g.iter_mut().zip(resid) {
                    *gj += k * rj;
                }
            }
            let gp: f64 = g.iter().zip(x).map(|(a, b)| a * b).sum();
            for (o, gj) in out.iter_mut().zip(&g) {
                *o = coef * (gj - gp);
            }
        })
    }
}

impl Sceptic for KernelSceptic {
    fn name(&self) -> String {
        format!("k29:eta={},sigma={}", self.eta, self.sigma)
    }

    fn next_move(&mut self, ctx: &RoundContext) -> Result<ScepticMove, StrategyError> {
        Ok(self.move_for(ctx.capital, ctx.history, ctx.outcomes))
    }
}

/// Binned calibration test on the event `omega = 1`:
/// `S(omega, p) = stake_b(p) (1{omega = 1} - p_1)` where `b(p)` is the bin of
/// `p_1` and `stake_b = fraction * capital * sign(sum over bin b of (1{omega_i = 1} - p_{i,1}))`.
/// Discontinuous in `p` at bin edges.
#[derive(Debug, Clone)]
pub struct BinSceptic {
    bins: usize,
    stake_fraction: f64,
}

pub fn bin_calibration_sceptic(bins: usize, stake_fraction: f64) -> Result<BinSceptic, StrategyError> {
    if bins < 2 {
        return Err(StrategyError::InvalidParameter("need at least 2 bins".into()));
    }
    if !(stake_fraction > 0.0 && stake_fraction < 1.0) {
        return Err(StrategyError::InvalidParameter("stake fraction must be in (0, 1)".into()));
    }
    Ok(BinSceptic { bins, stake_fraction })
}

impl BinSceptic {
    pub fn bin_of(&self, p1: f64) -> usize {
        ((p1 * self.bins as f64).floor().max(0.0) as usize).min(self.bins - 1)
    }

    /// Signed stakes per bin given the history.
    pub fn stakes(&self, capital: f64, history: &[(ProbVector, usize)]) -> Vec<f64> {
        let mut miscal = vec![0.0; self.bins];
        for (p, w) in history {
            miscal[self.bin_of(p[1])] += indicator(*w == 1) - p[1];
        }
        let size = self.stake_fraction * capital.max(0.0);
        miscal
            .into_iter()
            .map(|x| {
                if x > 0.0 {
                    size
                } else if x < 0.0 {
                    -size
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn move_for(&self, capital: f64, history: &[(ProbVector, usize)], m: usize) -> ScepticMove {
        let stakes = self.stakes(capital, history);
        let bound = self.stake_fraction * capital.max(0.0);
        let this = self.clone();
        ScepticMove::new(m, bound, Continuity::Arbitrary, move |p, out| {
            let p1 = p[1];
            let stake = stakes[this.bin_of(p1)];
            for (omega, o) in out.iter_mut().enumerate() {
                *o = stake * (indicator(omega == 1) - p1);
            }
        })
    }
}

impl Sceptic for BinSceptic {
    fn name(&self) -> String {
        format!("bins:{}:{}", self.bins, self.stake_fraction)
    }

    fn next_move(&mut self, ctx: &RoundContext) -> Result<ScepticMove, StrategyError> {
        if ctx.outcomes < 2 {
            return Err(StrategyError::UnsupportedDimension {
                supported: ">= 2",
                got: ctx.outcomes,
            });
        }
        Ok(self.move_for(ctx.capital, ctx.history, ctx.outcomes))
    }
}

/// Fuzzing Sceptic: `S = h - sum_nu h(nu, p) p_nu` for a random smooth `h`,
/// redrawn every round.
#[derive(Debug, Clone)]
pub struct RandomValidSceptic {
    seed: u64,
    rng: ChaCha8Rng,
}

pub fn random_valid_sceptic(seed: u64) -> RandomValidSceptic {
    RandomValidSceptic {
        seed,
        rng: ChaCha8Rng::seed_from_u64(seed),
    }
}

/// One random smooth valid move on `m` outcomes.
pub fn random_valid_move(rng: &mut impl Rng, m: usize) -> ScepticMove {
    let a: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let b: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let w: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect())
        .collect();
    let phase: Vec<f64> = (0..m)
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect();
    let sup_h = (0..m)
        .map(|o| a[o].iter().fold(0.0f64, |acc, x| acc.max(x.abs())) + b[o].abs())
        .fold(0.0f64, f64::max);
    ScepticMove::new(m, 2.0 * sup_h, Continuity::ContinuousInP, move |p, out| {
        let x = p.as_slice();
        for (o, slot) in out.iter_mut().enumerate() {
            let lin: f64 = a[o].iter().zip(x).map(|(c, v)| c * v).sum();
            let arg: f64 = w[o].iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + phase[o];
            *slot = lin + b[o] * arg.sin();
        }
        let mean: f64 = out.iter().zip(x).map(|(h, v)| h * v).sum();
        for slot in out.iter_mut() {
            *slot -= mean;
        }
    })
}

impl Sceptic for RandomValidSceptic {
    fn name(&self) -> String {
        format!("random:seed={}", self.seed)
    }

    fn next_move(&mut self, ctx: &RoundContext) -> Result<ScepticMove, StrategyError> {
        Ok(random_valid_move(&mut self.rng, ctx.outcomes))
    }
}

/// Sceptic who never bets.
#[derive(Debug, Clone, Default)]
pub struct ZeroSceptic;

impl Sceptic for ZeroSceptic {
    fn name(&self) -> String {
        "zero".into()
    }

    fn next_move(&mut self, ctx: &RoundContext) -> Result<ScepticMove, StrategyError> {
        Ok(ScepticMove::zero(ctx.outcomes))
    }
}

/// Reality's strategy.
#[derive(Debug, Clone)]
pub enum Reality {
    Iid { dist: ProbVector, rng: ChaCha8Rng },
    /// The outcome maximizing Sceptic's (expected) payoff; ties to the lowest index.
    Adversarial,
    Scripted { outcomes: Vec<usize>, pos: usize },
}

pub fn reality_iid(dist: ProbVector, seed: u64) -> Reality {
    Reality::Iid {
        dist,
        rng: ChaCha8Rng::seed_from_u64(seed),
    }
}

pub fn reality_scripted(outcomes: Vec<usize>) -> Reality {
    Reality::Scripted { outcomes, pos: 0 }
}

fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn sample_index(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

impl Reality {
    /// Outcome after a deterministic forecast; `payoffs[omega] = S(omega, p)`.
    pub fn outcome_point(&mut self, payoffs: &[f64]) -> Result<usize, StrategyError> {
        match self {
            Reality::Adversarial => Ok(argmax(payoffs.iter().copied())),
            _ => self.next_passive(),
        }
    }

    /// Outcome after a randomized forecast; `payoffs[j][omega] = S(omega, p_j)`.
    pub fn outcome_randomized(
        &mut self,
        forecast: &RandomizedForecast,
        payoffs: &[Vec<f64>],
    ) -> Result<usize, StrategyError> {
        match self {
            Reality::Adversarial => {
                let m = payoffs.first().map_or(0, Vec::len);
                Ok(argmax((0..m).map(|omega| {
                    forecast
                        .weights
                        .iter()
                        .zip(payoffs)
                        .map(|(w, row)| w * row[omega])
                        .sum::<f64>()
                })))
            }
            _ => self.next_passive(),
        }
    }

    fn next_passive(&mut self) -> Result<usize, StrategyError> {
        match self {
            Reality::Iid { dist, rng } => Ok(sample_index(rng, dist.as_slice())),
            Reality::Scripted { outcomes, pos } => {
                let w = *outcomes.get(*pos).ok_or(StrategyError::ScriptExhausted(*pos))?;
                *pos += 1;
                Ok(w)
            }
            Reality::Adversarial => unreachable!(),
        }
    }
}

/// How the realized forecast is drawn from a randomized forecast.
#[derive(Debug, Clone)]
pub enum RngPolicy {
    Faithful(ChaCha8Rng),
    /// Picks the support point maximizing `S(omega_n, p)`; ties to the lowest index.
    Adversarial,
}

impl RngPolicy {
    pub fn faithful(seed: u64) -> Self {
        RngPolicy::Faithful(ChaCha8Rng::seed_from_u64(seed))
    }

    /// `at_outcome[j] = S(omega_n, p_j)`.
    pub fn draw(&mut self, forecast: &RandomizedForecast, at_outcome: &[f64]) -> usize {
        match self {
            RngPolicy::Faithful(rng) => sample_index(rng, &forecast.weights),
            RngPolicy::Adversarial => argmax(at_outcome.iter().copied()),
        }
    }
}

/// Non-defensive forecasters used as baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NaiveKind {
    Uniform,
    /// Laplace-smoothed empirical frequencies.
    Frequency,
}

#[derive(Debug, Clone)]
pub struct NaiveForecaster {
    kind: NaiveKind,
}

impl NaiveForecaster {
    pub fn new(kind: NaiveKind) -> Self {
        NaiveForecaster { kind }
    }

    fn predict(&self, ctx: &RoundContext) -> ProbVector {
        match self.kind {
            NaiveKind::Uniform => ProbVector::uniform(ctx.outcomes),
            NaiveKind::Frequency => {
                let mut counts = vec![1.0; ctx.outcomes];
                for (_, w) in ctx.history {
                    counts[*w] += 1.0;
                }
                ProbVector::new(&counts).expect("positive counts")
            }
        }
    }
}

impl Forecaster for NaiveForecaster {
    fn name(&self) -> String {
        match self.kind {
            NaiveKind::Uniform => "uniform".into(),
            NaiveKind::Frequency => "frequency".into(),
        }
    }

    fn is_defensive(&self) -> bool {
        false
    }

    fn point(&mut self, ctx: &RoundContext, _s: &ScepticMove) -> Result<ProbVector, ForecasterError> {
        Ok(self.predict(ctx))
    }

    fn randomized(
        &mut self,
        ctx: &RoundContext,
        _s: &ScepticMove,
    ) -> Result<RandomizedForecast, ForecasterError> {
        Ok(RandomizedForecast::point_mass(self.predict(ctx)))
    }

    fn side_bet(
        &mut self,
        _ctx: &RoundContext,
        forecast: &RandomizedForecast,
        _at_outcome: &[f64],
    ) -> Result<SideBet, ForecasterError> {
        Ok(SideBet {
            values: vec![0.0; forecast.len()],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defensive::audit_validity;

    fn pv(w: &[f64]) -> ProbVector {
        ProbVector::new(w).unwrap()
    }

    fn probes(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Vec<ProbVector> {
        (0..n)
            .map(|_| {
                let raw: Vec<f64> = (0..m).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
                pv(&raw)
            })
            .collect()
    }

    fn ctx<'a>(n: u64, m: usize, capital: f64, history: &'a [(ProbVector, usize)]) -> RoundContext<'a> {
        RoundContext {
            n,
            outcomes: m,
            capital,
            history,
        }
    }

    #[test]
    fn linear_examples() {
        let zero = linear_sceptic(vec![0.0, 0.0]).unwrap().move_for();
        assert_eq!(zero.payoffs(&pv(&[0.3, 0.7])), vec![0.0, 0.0]);

        let s = linear_sceptic(vec![0.0, 1.0]).unwrap().move_for();
        assert_eq!(s.bound(), 2.0);
        let p = pv(&[0.3, 0.7]);
        assert_eq!(s.evaluate(1, &p), 1.0 - 0.7);
        assert_eq!(s.evaluate(0, &p), -0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(audit_validity(&s, &probes(&mut rng, 2, 100)).is_clean());
        assert!(linear_sceptic(vec![f64::NAN]).is_err());
    }

    #[test]
    fn kernel_examples() {
        let mut k = k29_kernel_sceptic(0.1, 0.2).unwrap();
        let s = k.next_move(&ctx(1, 2, 1.0, &[])).unwrap();
        assert_eq!(s.payoffs(&pv(&[0.4, 0.6])), vec![0.0, 0.0]);

        // One past round: p_1 = (1, 0), omega_1 = 1, queried at p = p_1.
        // e_1 - p_1 = (-1, 1); e_0 - p = 0 and e_1 - p = (-1, 1), so
        // S(0, p) = 0 and S(1, p) = eta * scale * 2 with scale = 1 / 2.
        let history = vec![(pv(&[1.0, 0.0]), 1)];
        let s = k.next_move(&ctx(2, 2, 1.0, &history)).unwrap();
        let at = pv(&[1.0, 0.0]);
        assert_eq!(s.evaluate(0, &at), 0.0);
        assert!((s.evaluate(1, &at) - 0.1).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let report = audit_validity(&s, &probes(&mut rng, 2, 100));
        assert!(report.is_clean());
    }

    #[test]
    fn bin_examples() {
        let mut b = bin_calibration_sceptic(2, 0.5).unwrap();
        let s = b.next_move(&ctx(1, 2, 1.0, &[])).unwrap();
        assert_eq!(s.payoffs(&pv(&[0.8, 0.2])), vec![0.0, 0.0]);

        let history: Vec<(ProbVector, usize)> = (0..3).map(|_| (pv(&[0.7, 0.3]), 1)).collect();
        let stakes = b.stakes(1.0, &history);
        assert_eq!(stakes, vec![0.5, 0.0]);
        let s = b.next_move(&ctx(4, 2, 1.0, &history)).unwrap();
        let p = pv(&[0.8, 0.2]);
        assert!((s.evaluate(1, &p) - 0.5 * 0.8).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(audit_validity(&s, &probes(&mut rng, 2, 200)).is_clean());
        assert!(bin_calibration_sceptic(1, 0.5).is_err());
        assert!(bin_calibration_sceptic(4, 1.0).is_err());
    }

    #[test]
    fn random_valid_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts = probes(&mut rng, 3, 1000);
        let mut a = random_valid_sceptic(1);
        let mut b = random_valid_sceptic(2);
        let sa = a.next_move(&ctx(1, 3, 1.0, &[])).unwrap();
        let sb = b.next_move(&ctx(1, 3, 1.0, &[])).unwrap();
        assert!(audit_validity(&sa, &pts).is_clean());
        assert!(audit_validity(&sb, &pts).is_clean());
        assert_ne!(sa.payoffs(&pts[0]), sb.payoffs(&pts[0]));
    }

    #[test]
    fn reality_examples() {
        let mut r = reality_scripted(vec![1, 0, 1]);
        let got: Vec<usize> = (0..3).map(|_| r.outcome_point(&[0.0, 0.0]).unwrap()).collect();
        assert_eq!(got, vec![1, 0, 1]);
        assert_eq!(r.outcome_point(&[0.0, 0.0]), Err(StrategyError::ScriptExhausted(3)));

        // c = (0, 1) at p = (0.9, 0.1): S(1, p) = 0.9 > S(0, p) = -0.1.
        let s = linear_sceptic(vec![0.0, 1.0]).unwrap().move_for();
        let payoffs = s.payoffs(&pv(&[0.9, 0.1]));
        assert!((payoffs[1] - 0.9).abs() < 1e-15 && (payoffs[0] + 0.1).abs() < 1e-15);
        assert_eq!(Reality::Adversarial.outcome_point(&payoffs).unwrap(), 1);

        let mut iid = reality_iid(pv(&[1.0, 0.0]), 9);
        assert!((0..100).all(|_| iid.outcome_point(&[0.0, 0.0]).unwrap() == 0));
    }

    #[test]
    fn rng_policies() {
        let f = RandomizedForecast {
            support: vec![pv(&[0.5, 0.5]), pv(&[0.4, 0.6])],
            weights: vec![0.25, 0.75],
            mesh_order: 1,
            cell: 0,
            window_scale: 1.0,
        };
        assert_eq!(RngPolicy::Adversarial.draw(&f, &[0.1, 0.3]), 1);
        assert_eq!(RngPolicy::Adversarial.draw(&f, &[0.3, 0.3]), 0);
        let mut rng = RngPolicy::faithful(5);
        let ones = (0..4000).filter(|_| rng.draw(&f, &[0.0, 0.0]) == 1).count();
        assert!((ones as f64 / 4000.0 - 0.75).abs() < 0.03);
    }
}
