//! Enforceable state machines for both games and the game runner.
//!
//! Each game state accepts moves in protocol order only. A move out of turn,
//! an invalid move, or a capital going negative under enforcement ends the
//! game with a forfeit charged to exactly one player.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversaries::{Reality, RngPolicy, StrategyError};
use crate::defensive::{
    build_randomized_forecast, side_bet_from_payoffs, solve_continuous_with, DefensiveError,
    ForecastConfig, RandomizedForecast, ScepticMove, SearchConfig, SideBet, TolSchedule,
    TriangulationCache, VALIDITY_TOL,
};
pub use crate::defensive::payoff_scale;
use crate::simplex::ProbVector;
use crate::transcript::{Header, RoundRecord, Transcript};

/// Slack on capital comparisons (nonnegativity and the dominance invariant),
/// relative to `max(1, |capital|)`.
pub const CAPITAL_TOL: f64 = 1e-9;
/// Largest allowed `sum_p P(p) f(p)`, relative to the round's payoff scale
/// `max(1, max |S|)`.
pub const SIDE_BET_TOL: f64 = 1e-9;

/// `max(1, |x|)`: the unit relative slacks are measured in.
pub fn magnitude(x: f64) -> f64 {
    x.abs().max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameKind {
    Continuous,
    Randomized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Player {
    Sceptic,
    Forecaster,
    Reality,
    Rng,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Sceptic,
    Forecast,
    Outcome,
    SideBet,
    Draw,
    Finished,
}

impl Phase {
    fn mover(self) -> Option<Player> {
        match self {
            Phase::Sceptic => Some(Player::Sceptic),
            Phase::Forecast | Phase::SideBet => Some(Player::Forecaster),
            Phase::Outcome => Some(Player::Reality),
            Phase::Draw => Some(Player::Rng),
            Phase::Finished => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forfeit {
    pub round: u64,
    pub player: Player,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("move {attempted:?} out of order: expected {expected:?}")]
    OrderViolation { expected: Phase, attempted: Phase },
    #[error("side bet has positive mean {mean} under the forecast")]
    SideBetInvalid { mean: f64 },
    #[error("{} forfeits at round {}: {}", .0.player_name(), .0.round, .0.reason)]
    Forfeited(Forfeit),
}

impl Forfeit {
    fn player_name(&self) -> &'static str {
        match self.player {
            Player::Sceptic => "sceptic",
            Player::Forecaster => "forecaster",
            Player::Reality => "reality",
            Player::Rng => "rng",
        }
    }
}

/// Finite-horizon summary of a game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub horizon: u64,
    pub rounds_played: u64,
    pub sup_k: f64,
    pub final_k: f64,
    pub final_f: f64,
    /// Randomized: `K_n <= (1 + eps) F_n + 1e-9` at every round.
    /// Continuous: `K_n <= 1 + eps_c + 1e-9` at every round.
    pub invariant_held: bool,
    pub forfeits: Vec<Forfeit>,
}

impl Verdict {
    pub fn is_success(&self) -> bool {
        self.forfeits.is_empty() && self.invariant_held
    }
}

/// Whether a round's capitals satisfy the game's headline invariant.
pub fn invariant_holds(game: GameKind, eps: f64, eps_c: f64, k: f64, f: f64) -> bool {
    match game {
        GameKind::Randomized => k <= (1.0 + eps) * f + CAPITAL_TOL * magnitude(k),
        GameKind::Continuous => k <= 1.0 + eps_c + CAPITAL_TOL * magnitude(k),
    }
}

/// Whether `capital` counts as nonnegative after a round that started at `prev`.
pub fn nonnegative(capital: f64, prev: f64) -> bool {
    capital >= -CAPITAL_TOL * magnitude(prev)
}

/// Bookkeeping shared by both game states.
#[derive(Debug, Clone)]
struct Ledger {
    game: GameKind,
    outcomes: usize,
    eps: f64,
    eps_c: f64,
    enforce_nonnegativity: bool,
    phase: Phase,
    round: u64,
    k: f64,
    f: f64,
    sup_k: f64,
    invariant_held: bool,
    rounds: Vec<RoundRecord>,
    forfeits: Vec<Forfeit>,
}

impl Ledger {
    fn new(game: GameKind, outcomes: usize, eps: f64, eps_c: f64, enforce: bool) -> Self {
        Ledger {
            game,
            outcomes,
            eps,
            eps_c,
            enforce_nonnegativity: enforce,
            phase: Phase::Sceptic,
            round: 0,
            k: 1.0,
            f: 1.0,
            sup_k: 1.0,
            invariant_held: true,
            rounds: Vec::new(),
            forfeits: Vec::new(),
        }
    }

    fn expect(&mut self, attempted: Phase) -> Result<(), ProtocolError> {
        if self.phase == attempted {
            return Ok(());
        }
        let expected = self.phase;
        if expected != Phase::Finished {
            let player = attempted.mover().expect("attempted moves have movers");
            self.forfeit(player, format!("moved {attempted:?} while {expected:?} was due"));
        }
        Err(ProtocolError::OrderViolation { expected, attempted })
    }

    fn forfeit(&mut self, player: Player, reason: String) -> ProtocolError {
        self.forfeit_at(self.round + 1, player, reason)
    }

    fn forfeit_at(&mut self, round: u64, player: Player, reason: String) -> ProtocolError {
        let f = Forfeit {
            round,
            player,
            reason,
        };
        self.forfeits.push(f.clone());
        self.phase = Phase::Finished;
        ProtocolError::Forfeited(f)
    }

    fn audit(&mut self, s: &ScepticMove, points: &[ProbVector], payoffs: &[Vec<f64>]) -> Result<(), ProtocolError> {
        for (p, row) in points.iter().zip(payoffs) {
            let gain: f64 = row.iter().zip(p.as_slice()).map(|(a, b)| a * b).sum();
            if !(gain <= VALIDITY_TOL * payoff_scale(row)) {
                return Err(self.forfeit(
                    Player::Sceptic,
                    format!("expected gain {gain} > 0 at {:?}", p.as_slice()),
                ));
            }
            if let Some((omega, v)) = row
                .iter()
                .enumerate()
                .find(|(_, v)| !(v.abs() <= s.bound() + VALIDITY_TOL * s.bound().max(1.0)))
            {
                return Err(self.forfeit(
                    Player::Sceptic,
                    format!("payoff {v} for outcome {omega} exceeds bound {}", s.bound()),
                ));
            }
        }
        Ok(())
    }

    fn close_round(&mut self, record: RoundRecord) -> Result<(), ProtocolError> {
        let (k_prev, f_prev) = (self.k, self.f);
        self.round += 1;
        self.k = record.k;
        self.f = record.f_cap;
        self.sup_k = self.sup_k.max(self.k);
        if !invariant_holds(self.game, self.eps, self.eps_c, self.k, self.f) {
            self.invariant_held = false;
        }
        self.rounds.push(record);
        self.phase = Phase::Sceptic;
        if self.enforce_nonnegativity {
            if !nonnegative(self.k, k_prev) {
                let reason = format!("capital K = {} is negative", self.k);
                return Err(self.forfeit_at(self.round, Player::Sceptic, reason));
            }
            if !nonnegative(self.f, f_prev) {
                let reason = format!("capital F = {} is negative", self.f);
                return Err(self.forfeit_at(self.round, Player::Forecaster, reason));
            }
        }
        Ok(())
    }

    fn verdict(&self, horizon: u64) -> Verdict {
        Verdict {
            horizon,
            rounds_played: self.round,
            sup_k: self.sup_k,
            final_k: self.k,
            final_f: self.f,
            invariant_held: self.invariant_held,
            forfeits: self.forfeits.clone(),
        }
    }
}

fn check_dim(ledger: &mut Ledger, player: Player, got: usize) -> Result<(), ProtocolError> {
    if got != ledger.outcomes {
        let expected = ledger.outcomes;
        return Err(ledger.forfeit(player, format!("dimension {got}, expected {expected}")));
    }
    Ok(())
}

/// State of the continuous game: `K_n = K_{n-1} + S_n(omega_n, p_n)`.
#[derive(Debug, Clone)]
pub struct ContinuousGameState {
    ledger: Ledger,
    pending_move: Option<ScepticMove>,
    pending_point: Option<(ProbVector, Vec<f64>)>,
}

impl ContinuousGameState {
    pub fn new(outcomes: usize, eps_c: f64, enforce_nonnegativity: bool) -> Self {
        ContinuousGameState {
            ledger: Ledger::new(GameKind::Continuous, outcomes, 0.0, eps_c, enforce_nonnegativity),
            pending_move: None,
            pending_point: None,
        }
    }

    pub fn round(&self) -> u64 {
        self.ledger.round
    }

    pub fn capital(&self) -> f64 {
        self.ledger.k
    }

    pub fn phase(&self) -> Phase {
        self.ledger.phase
    }

    pub fn is_finished(&self) -> bool {
        self.ledger.phase == Phase::Finished
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        &self.ledger.rounds
    }

    /// `S(omega, p)` for every outcome at the announced forecast.
    pub fn pending_payoffs(&self) -> Option<&[f64]> {
        self.pending_point.as_ref().map(|(_, v)| v.as_slice())
    }

    pub fn record_forfeit(&mut self, player: Player, reason: String) -> ProtocolError {
        self.ledger.forfeit(player, reason)
    }

    pub fn sceptic_move(&mut self, s: ScepticMove) -> Result<(), ProtocolError> {
        self.ledger.expect(Phase::Sceptic)?;
        check_dim(&mut self.ledger, Player::Sceptic, s.outcomes())?;
        self.pending_move = Some(s);
        self.ledger.phase = Phase::Forecast;
        Ok(())
    }

    /// Announce `p_n`; Sceptic's move is audited at `p_n`.
    pub fn forecast(&mut self, p: ProbVector) -> Result<(), ProtocolError> {
        self.ledger.expect(Phase::Forecast)?;
        check_dim(&mut self.ledger, Player::Forecaster, p.dim())?;
        let s = self.pending_move.as_ref().expect("set in the sceptic phase").clone();
        let payoffs = s.payoffs(&p);
        self.ledger.audit(&s, std::slice::from_ref(&p), std::slice::from_ref(&payoffs))?;
        self.pending_point = Some((p, payoffs));
        self.ledger.phase = Phase::Outcome;
        Ok(())
    }

    pub fn outcome(&mut self, omega: usize) -> Result<(), ProtocolError> {
        self.ledger.expect(Phase::Outcome)?;
        if omega >= self.ledger.outcomes {
            return Err(self.ledger.forfeit(Player::Reality, format!("outcome {omega} out of range")));
        }
        let (p, payoffs) = self.pending_point.take().expect("set in the forecast phase");
        self.pending_move = None;
        let record = RoundRecord {
            n: self.ledger.round + 1,
            support: vec![p.into_vec()],
            weights: vec![1.0],
            omega,
            drawn: 0,
            f: vec![0.0],
            payoff: payoffs.iter().map(|&v| vec![v]).collect(),
            k: self.ledger.k + payoffs[omega],
            f_cap: self.ledger.f,
        };
        self.ledger.close_round(record)
    }

    pub fn verdict(&self, horizon: u64) -> Verdict {
        self.ledger.verdict(horizon)
    }
}

/// One continuous round in protocol order.
pub fn step_continuous(
    state: &mut ContinuousGameState,
    s: ScepticMove,
    p: ProbVector,
    omega: usize,
) -> Result<(), ProtocolError> {
    state.sceptic_move(s)?;
    state.forecast(p)?;
    state.outcome(omega)
}

/// State of the randomized game with capitals `K` (Sceptic) and `F`
/// (Forecaster's side bets against the random number generator).
#[derive(Debug, Clone)]
pub struct RandomizedGameState {
    ledger: Ledger,
    pending_move: Option<ScepticMove>,
    forecast: Option<RandomizedForecast>,
    /// `payoffs[j][omega] = S(omega, p_j)`.
    payoffs: Vec<Vec<f64>>,
    omega: Option<usize>,
    bet: Option<SideBet>,
}

impl RandomizedGameState {
    pub fn new(outcomes: usize, eps: f64, enforce_nonnegativity: bool) -> Self {
        RandomizedGameState {
            ledger: Ledger::new(GameKind::Randomized, outcomes, eps, 0.0, enforce_nonnegativity),
            pending_move: None,
            forecast: None,
            payoffs: Vec::new(),
            omega: None,
            bet: None,
        }
    }

    pub fn round(&self) -> u64 {
        self.ledger.round
    }

    pub fn capital(&self) -> f64 {
        self.ledger.k
    }

    pub fn forecaster_capital(&self) -> f64 {
        self.ledger.f
    }

    pub fn phase(&self) -> Phase {
        self.ledger.phase
    }

    pub fn is_finished(&self) -> bool {
        self.ledger.phase == Phase::Finished
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        &self.ledger.rounds
    }

    /// `payoffs[j][omega] = S(omega, p_j)` on the announced support.
    pub fn pending_payoffs(&self) -> &[Vec<f64>] {
        &self.payoffs
    }

    pub fn record_forfeit(&mut self, player: Player, reason: String) -> ProtocolError {
        self.ledger.forfeit(player, reason)
    }

    pub fn sceptic_move(&mut self, s: ScepticMove) -> Result<(), ProtocolError> {
        self.ledger.expect(Phase::Sceptic)?;
        check_dim(&mut self.ledger, Player::Sceptic, s.outcomes())?;
        self.pending_move = Some(s);
        self.ledger.phase = Phase::Forecast;
        Ok(())
    }

    /// Announce `P_n`; Sceptic's move is audited at every support point.
    pub fn forecast(&mut self, forecast: RandomizedForecast) -> Result<(), ProtocolError> {
        self.ledger.expect(Phase::Forecast)?;
        if forecast.is_empty() || forecast.weights.len() != forecast.len() {
            return Err(self.ledger.forfeit(Player::Forecaster, "malformed support".into()));
        }
        for p in &forecast.support {
            check_dim(&mut self.ledger, Player::Forecaster, p.dim())?;
        }
        let total: f64 = forecast.weights.iter().sum();
        if forecast.weights.iter().any(|w| !(*w > 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(self.ledger.forfeit(
                Player::Forecaster,
                format!("weights must be positive and sum to 1, sum is {total}"),
            ));
        }
        let s = self.pending_move.as_ref().expect("set in the sceptic phase").clone();
        let payoffs: Vec<Vec<f64>> = forecast.support.iter().map(|p| s.payoffs(p)).collect();
        self.ledger.audit(&s, &forecast.support, &payoffs)?;
        self.payoffs = payoffs;
        self.forecast = Some(forecast);
        self.ledger.phase = Phase::Outcome;
        Ok(())
    }

    pub fn outcome(&mut self, omega: usize) -> Result<(), ProtocolError> {
        self.ledger.expect(Phase::Outcome)?;
        if omega >= self.ledger.outcomes {
            return Err(self.ledger.forfeit(Player::Reality, format!("outcome {omega} out of range")));
        }
        self.omega = Some(omega);
        self.ledger.phase = Phase::SideBet;
        Ok(())
    }

    pub fn side_bet(&mut self, bet: SideBet) -> Result<(), ProtocolError> {
        self.ledger.expect(Phase::SideBet)?;
        let forecast = self.forecast.as_ref().expect("set in the forecast phase");
        if bet.values.len() != forecast.len() || bet.values.iter().any(|v| !v.is_finite()) {
            return Err(self.ledger.forfeit(Player::Forecaster, "malformed side bet".into()));
        }
        let mean = bet.mean(forecast);
        let scale = self.payoffs.iter().map(|row| payoff_scale(row)).fold(1.0, f64::max);
        if !(mean <= SIDE_BET_TOL * scale) {
            self.ledger.forfeit(Player::Forecaster, format!("side bet mean {mean} > 0"));
            return Err(ProtocolError::SideBetInvalid { mean });
        }
        self.bet = Some(bet);
        self.ledger.phase = Phase::Draw;
        Ok(())
    }

    pub fn draw(&mut self, drawn: usize) -> Result<(), ProtocolError> {
        self.ledger.expect(Phase::Draw)?;
        let len = self.forecast.as_ref().map_or(0, RandomizedForecast::len);
        if drawn >= len {
            return Err(self.ledger.forfeit(Player::Rng, format!("draw {drawn} outside support of {len}")));
        }
        let forecast = self.forecast.take().expect("set in the forecast phase");
        let bet = self.bet.take().expect("set in the side bet phase");
        let omega = self.omega.take().expect("set in the outcome phase");
        let payoffs = std::mem::take(&mut self.payoffs);
        self.pending_move = None;
        let m = self.ledger.outcomes;
        let record = RoundRecord {
            n: self.ledger.round + 1,
            k: self.ledger.k + payoffs[drawn][omega],
            f_cap: self.ledger.f + bet.values[drawn],
            support: forecast.support.into_iter().map(ProbVector::into_vec).collect(),
            weights: forecast.weights,
            omega,
            drawn,
            f: bet.values,
            payoff: (0..m).map(|w| payoffs.iter().map(|row| row[w]).collect()).collect(),
        };
        self.ledger.close_round(record)
    }

    pub fn verdict(&self, horizon: u64) -> Verdict {
        self.ledger.verdict(horizon)
    }
}

/// One randomized round in protocol order.
pub fn step_randomized(
    state: &mut RandomizedGameState,
    s: ScepticMove,
    forecast: RandomizedForecast,
    omega: usize,
    bet: SideBet,
    drawn: usize,
) -> Result<(), ProtocolError> {
    state.sceptic_move(s)?;
    state.forecast(forecast)?;
    state.outcome(omega)?;
    state.side_bet(bet)?;
    state.draw(drawn)
}

/// Per-round information visible to strategies.
#[derive(Debug, Clone, Copy)]
pub struct RoundContext<'a> {
    /// Round about to be played, starting at 1.
    pub n: u64,
    pub outcomes: usize,
    /// Sceptic's capital before the round.
    pub capital: f64,
    /// Played forecasts and outcomes of earlier rounds.
    pub history: &'a [(ProbVector, usize)],
}

pub trait Sceptic: Send {
    fn name(&self) -> String;
    fn next_move(&mut self, ctx: &RoundContext) -> Result<ScepticMove, StrategyError>;
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForecasterError {
    #[error(transparent)]
    Defensive(#[from] DefensiveError),
    #[error("{0}")]
    Other(String),
}

impl ForecasterError {
    /// The player charged with the failure.
    pub fn blame(&self) -> Player {
        match self {
            ForecasterError::Defensive(e) if e.is_sceptic_fault() => Player::Sceptic,
            _ => Player::Forecaster,
        }
    }
}

pub trait Forecaster: Send {
    fn name(&self) -> String;
    /// Whether the forecaster claims the defensive guarantees.
    fn is_defensive(&self) -> bool;
    fn point(&mut self, ctx: &RoundContext, s: &ScepticMove) -> Result<ProbVector, ForecasterError>;
    fn randomized(
        &mut self,
        ctx: &RoundContext,
        s: &ScepticMove,
    ) -> Result<RandomizedForecast, ForecasterError>;
    /// `at_outcome[j] = S(omega_n, p_j)` on the announced support.
    fn side_bet(
        &mut self,
        ctx: &RoundContext,
        forecast: &RandomizedForecast,
        at_outcome: &[f64],
    ) -> Result<SideBet, ForecasterError>;
}

/// Schedule of support diameters `eps_n` for the randomized game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EpsSchedule {
    Constant { c: f64 },
    /// `max(a r^n, floor)`.
    Geometric {
        a: f64,
        r: f64,
        #[serde(default = "default_floor")]
        floor: f64,
    },
}

pub const DEFAULT_EPS_FLOOR: f64 = 1e-4;

fn default_floor() -> f64 {
    DEFAULT_EPS_FLOOR
}

impl EpsSchedule {
    pub fn at(&self, n: u64) -> f64 {
        match *self {
            EpsSchedule::Constant { c } => c,
            EpsSchedule::Geometric { a, r, floor } => {
                let exp = i32::try_from(n).unwrap_or(i32::MAX);
                (a * r.powi(exp)).max(floor)
            }
        }
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            EpsSchedule::Constant { c } => c > 0.0 && c.is_finite(),
            EpsSchedule::Geometric { a, r, floor } => {
                a > 0.0 && a.is_finite() && r > 0.0 && r <= 1.0 && floor > 0.0 && floor.is_finite()
            }
        }
    }
}

/// Game parameters shared by the engine, the defensive forecaster and the
/// transcript header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub game: GameKind,
    #[serde(rename = "M")]
    pub outcomes: usize,
    #[serde(rename = "N")]
    pub horizon: u64,
    pub eps: f64,
    pub eps_c: f64,
    pub eps_n_schedule: EpsSchedule,
    pub tol_schedule: TolSchedule,
    pub enforce_nonnegativity: bool,
    pub seed: u64,
    pub k0: usize,
    pub kmax: usize,
}

/// Forecaster built from the constructions in [`crate::defensive`].
#[derive(Debug, Clone)]
pub struct DefensiveForecaster {
    eps: f64,
    eps_c: f64,
    eps_n: EpsSchedule,
    tol: TolSchedule,
    cfg: ForecastConfig,
}

impl DefensiveForecaster {
    pub fn new(game: &GameConfig) -> Self {
        DefensiveForecaster {
            eps: game.eps,
            eps_c: game.eps_c,
            eps_n: game.eps_n_schedule,
            tol: game.tol_schedule,
            cfg: ForecastConfig {
                search: SearchConfig::with_orders(game.k0, game.kmax),
                ..ForecastConfig::default()
            },
        }
    }

    pub fn with_forecast_config(mut self, cfg: ForecastConfig) -> Self {
        self.cfg = cfg;
        self
    }
}

impl Forecaster for DefensiveForecaster {
    fn name(&self) -> String {
        "defensive".into()
    }

    fn is_defensive(&self) -> bool {
        true
    }

    fn point(&mut self, ctx: &RoundContext, s: &ScepticMove) -> Result<ProbVector, ForecasterError> {
        let tol = self.tol.tol(self.eps_c, ctx.n);
        let sol = solve_continuous_with(s, tol, &self.cfg.search, TriangulationCache::shared())?;
        Ok(sol.forecast)
    }

    fn randomized(
        &mut self,
        ctx: &RoundContext,
        s: &ScepticMove,
    ) -> Result<RandomizedForecast, ForecasterError> {
        let eps_n = self.eps_n.at(ctx.n);
        let (forecast, _) =
            build_randomized_forecast(s, ctx.n, self.eps, eps_n, &self.cfg, TriangulationCache::shared())?;
        Ok(forecast)
    }

    fn side_bet(
        &mut self,
        ctx: &RoundContext,
        _forecast: &RandomizedForecast,
        at_outcome: &[f64],
    ) -> Result<SideBet, ForecasterError> {
        Ok(side_bet_from_payoffs(at_outcome, self.eps, ctx.n))
    }
}

/// Labels of the strategies recorded in the transcript header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lineup {
    pub reality: String,
    pub rng: String,
}

enum GameState {
    Continuous(ContinuousGameState),
    Randomized(RandomizedGameState),
}

impl GameState {
    fn forfeit(&mut self, player: Player, reason: String) {
        match self {
            GameState::Continuous(s) => s.record_forfeit(player, reason),
            GameState::Randomized(s) => s.record_forfeit(player, reason),
        };
    }
}

/// Play up to `config.horizon` rounds. Strategy failures become forfeits.
pub fn run_game(
    config: &GameConfig,
    sceptic: &mut dyn Sceptic,
    forecaster: &mut dyn Forecaster,
    reality: &mut Reality,
    rng: &mut RngPolicy,
    lineup: &Lineup,
) -> Transcript {
    let m = config.outcomes;
    let mut state = match config.game {
        GameKind::Continuous => GameState::Continuous(ContinuousGameState::new(
            m,
            config.eps_c,
            config.enforce_nonnegativity,
        )),
        GameKind::Randomized => GameState::Randomized(RandomizedGameState::new(
            m,
            config.eps,
            config.enforce_nonnegativity,
        )),
    };
    let mut history: Vec<(ProbVector, usize)> = Vec::new();

    for n in 1..=config.horizon {
        let capital = match &state {
            GameState::Continuous(s) => s.capital(),
            GameState::Randomized(s) => s.capital(),
        };
        let ctx = RoundContext {
            n,
            outcomes: m,
            capital,
            history: &history,
        };
        let s = match sceptic.next_move(&ctx) {
            Ok(s) => s,
            Err(e) => {
                state.forfeit(Player::Sceptic, e.to_string());
                break;
            }
        };
        let played = match &mut state {
            GameState::Continuous(st) => play_continuous_round(st, &ctx, s, forecaster, reality),
            GameState::Randomized(st) => play_randomized_round(st, &ctx, s, forecaster, reality, rng),
        };
        match played {
            Some(entry) => history.push(entry),
            None => break,
        }
    }

    let verdict = match &state {
        GameState::Continuous(s) => s.verdict(config.horizon),
        GameState::Randomized(s) => s.verdict(config.horizon),
    };
    let rounds = match state {
        GameState::Continuous(s) => s.ledger.rounds,
        GameState::Randomized(s) => s.ledger.rounds,
    };
    let header = Header::new(
        config.clone(),
        sceptic.name(),
        forecaster.name(),
        forecaster.is_defensive(),
        lineup.clone(),
        verdict,
    );
    Transcript::new(header, rounds)
}

fn play_continuous_round(
    st: &mut ContinuousGameState,
    ctx: &RoundContext,
    s: ScepticMove,
    forecaster: &mut dyn Forecaster,
    reality: &mut Reality,
) -> Option<(ProbVector, usize)> {
    st.sceptic_move(s.clone()).ok()?;
    let p = match forecaster.point(ctx, &s) {
        Ok(p) => p,
        Err(e) => {
            st.record_forfeit(e.blame(), e.to_string());
            return None;
        }
    };
    st.forecast(p.clone()).ok()?;
    let payoffs = st.pending_payoffs().expect("forecast accepted").to_vec();
    let omega = match reality.outcome_point(&payoffs) {
        Ok(w) => w,
        Err(e) => {
            st.record_forfeit(Player::Reality, e.to_string());
            return None;
        }
    };
    st.outcome(omega).ok()?;
    Some((p, omega))
}

fn play_randomized_round(
    st: &mut RandomizedGameState,
    ctx: &RoundContext,
    s: ScepticMove,
    forecaster: &mut dyn Forecaster,
    reality: &mut Reality,
    rng: &mut RngPolicy,
) -> Option<(ProbVector, usize)> {
    st.sceptic_move(s.clone()).ok()?;
    let forecast = match forecaster.randomized(ctx, &s) {
        Ok(f) => f,
        Err(e) => {
            st.record_forfeit(e.blame(), e.to_string());
            return None;
        }
    };
    st.forecast(forecast.clone()).ok()?;
    let omega = match reality.outcome_randomized(&forecast, st.pending_payoffs()) {
        Ok(w) => w,
        Err(e) => {
            st.record_forfeit(Player::Reality, e.to_string());
            return None;
        }
    };
    st.outcome(omega).ok()?;
    let at_outcome: Vec<f64> = st.pending_payoffs().iter().map(|row| row[omega]).collect();
    let bet = match forecaster.side_bet(ctx, &forecast, &at_outcome) {
        Ok(b) => b,
        Err(e) => {
            st.record_forfeit(Player::Forecaster, e.to_string());
            return None;
        }
    };
    st.side_bet(bet).ok()?;
    let drawn = rng.draw(&forecast, &at_outcome);
    st.draw(drawn).ok()?;
    Some((forecast.support[drawn].clone(), omega))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defensive::{side_bet, Continuity};

    fn pv(w: &[f64]) -> ProbVector {
        ProbVector::new(w).unwrap()
    }

    fn indicator_move() -> ScepticMove {
        ScepticMove::from_fn(2, 1.0, Continuity::ContinuousInP, |w, p| {
            (w == 1) as u8 as f64 - p[1]
        })
    }

    #[test]
    fn zero_move_keeps_capital() {
        let mut st = ContinuousGameState::new(2, 0.01, true);
        step_continuous(&mut st, ScepticMove::zero(2), pv(&[0.3, 0.7]), 1).unwrap();
        assert_eq!(st.capital(), 1.0);
        assert_eq!(st.round(), 1);
    }

    #[test]
    fn continuous_step_arithmetic() {
        let mut st = ContinuousGameState::new(2, 0.01, true);
        step_continuous(&mut st, indicator_move(), pv(&[0.5, 0.5]), 1).unwrap();
        assert_eq!(st.capital(), 1.5);
        assert_eq!(st.rounds()[0].payoff, vec![vec![-0.5], vec![0.5]]);
    }

    #[test]
    fn invalid_move_forfeits_and_freezes_capital() {
        // Expected gain 0.5 * 1 + 0.5 * 1 = 1 > 0.
        let bad = ScepticMove::from_fn(2, 1.0, Continuity::ContinuousInP, |_, _| 1.0);
        let mut st = ContinuousGameState::new(2, 0.01, true);
        let err = step_continuous(&mut st, bad, pv(&[0.5, 0.5]), 1).unwrap_err();
        assert!(matches!(err, ProtocolError::Forfeited(Forfeit { player: Player::Sceptic, round: 1, .. })));
        assert_eq!(st.capital(), 1.0);
        assert!(st.is_finished());
        assert!(st.rounds().is_empty());
    }

    #[test]
    fn bound_violation_forfeits() {
        let s = ScepticMove::from_fn(2, 0.1, Continuity::ContinuousInP, |w, p| {
            (w == 1) as u8 as f64 - p[1]
        });
        let mut st = ContinuousGameState::new(2, 0.01, true);
        let err = step_continuous(&mut st, s, pv(&[0.5, 0.5]), 1).unwrap_err();
        assert!(matches!(err, ProtocolError::Forfeited(Forfeit { player: Player::Sceptic, .. })));
    }

    #[test]
    fn order_violation_blames_the_mover() {
        let mut st = RandomizedGameState::new(2, 0.1, true);
        let err = st.outcome(0).unwrap_err();
        assert_eq!(
            err,
            ProtocolError::OrderViolation {
                expected: Phase::Sceptic,
                attempted: Phase::Outcome
            }
        );
        let v = st.verdict(1);
        assert_eq!(v.forfeits.len(), 1);
        assert_eq!(v.forfeits[0].player, Player::Reality);
        assert!(st.sceptic_move(ScepticMove::zero(2)).is_err());
        assert_eq!(st.verdict(1).forfeits.len(), 1);
    }

    #[test]
    fn zero_move_side_bet_drains_forecaster() {
        let eps = 0.1;
        let mut st = RandomizedGameState::new(2, eps, true);
        let forecast = RandomizedForecast::point_mass(pv(&[0.5, 0.5]));
        let bet = side_bet(&ScepticMove::zero(2), 0, &forecast, eps, 1);
        step_randomized(&mut st, ScepticMove::zero(2), forecast, 0, bet, 0).unwrap();
        assert_eq!(st.capital(), 1.0);
        let expected = 1.0 - eps * 0.5 / (1.0 + eps);
        assert!((st.forecaster_capital() - expected).abs() < 1e-15);
    }

    #[test]
    fn scripted_rounds_by_hand() {
        // S = 1{w=1} - p_1 with point-mass forecasts; eps = 0.5.
        //  n  p_1   w   S(w,p)  delta=0.5/2^n  f=(S-delta)/1.5   K      F
        //  1  0.5   0   -0.5     0.25          -1/2             0.5    1/2
        //  2  1     1    0       0.125         -1/12            0.5    5/12
        //  3  0.25  0   -0.25    0.0625        -5/24            0.25   5/24
        let eps = 0.5;
        let mut st = RandomizedGameState::new(2, eps, true);
        let plays = [(0.5, 0), (1.0, 1), (0.25, 0)];
        let expect = [(0.5, 0.5), (0.5, 5.0 / 12.0), (0.25, 5.0 / 24.0)];
        for (n, ((p1, w), (k, f))) in plays.iter().zip(expect).enumerate() {
            let forecast = RandomizedForecast::point_mass(pv(&[1.0 - p1, *p1]));
            let bet = side_bet(&indicator_move(), *w, &forecast, eps, n as u64 + 1);
            step_randomized(&mut st, indicator_move(), forecast, *w, bet, 0).unwrap();
            assert!((st.capital() - k).abs() < 1e-15, "K at {}", n + 1);
            assert!((st.forecaster_capital() - f).abs() < 1e-15, "F at {}", n + 1);
        }
    }

    #[test]
    fn positive_side_bet_forfeits_forecaster() {
        let mut st = RandomizedGameState::new(2, 0.1, true);
        st.sceptic_move(ScepticMove::zero(2)).unwrap();
        st.forecast(RandomizedForecast::point_mass(pv(&[0.5, 0.5]))).unwrap();
        st.outcome(1).unwrap();
        let err = st.side_bet(SideBet { values: vec![0.01] }).unwrap_err();
        assert_eq!(err, ProtocolError::SideBetInvalid { mean: 0.01 });
        assert_eq!(st.verdict(1).forfeits[0].player, Player::Forecaster);
    }

    #[test]
    fn draw_outside_support_blames_rng() {
        let mut st = RandomizedGameState::new(2, 0.1, true);
        st.sceptic_move(ScepticMove::zero(2)).unwrap();
        st.forecast(RandomizedForecast::point_mass(pv(&[0.5, 0.5]))).unwrap();
        st.outcome(1).unwrap();
        st.side_bet(SideBet { values: vec![0.0] }).unwrap();
        assert!(st.draw(1).is_err());
        assert_eq!(st.verdict(1).forfeits[0].player, Player::Rng);
    }

    #[test]
    fn negative_capital_forfeits_only_when_enforced() {
        let s = || {
            ScepticMove::from_fn(2, 2.0, Continuity::ContinuousInP, |w, p| {
                2.0 * ((w == 1) as u8 as f64 - p[1])
            })
        };
        let mut on = ContinuousGameState::new(2, 0.01, true);
        let err = step_continuous(&mut on, s(), pv(&[0.0, 1.0]), 0).unwrap_err();
        assert!(matches!(err, ProtocolError::Forfeited(Forfeit { player: Player::Sceptic, round: 1, .. })));
        assert_eq!(on.capital(), -1.0);

        let mut off = ContinuousGameState::new(2, 0.01, false);
        step_continuous(&mut off, s(), pv(&[0.0, 1.0]), 0).unwrap();
        assert!(off.verdict(1).forfeits.is_empty());
    }

    #[test]
    fn eps_schedules() {
        let g = EpsSchedule::Geometric { a: 0.05, r: 0.5, floor: 1e-4 };
        assert_eq!(g.at(1), 0.025);
        assert_eq!(g.at(100), 1e-4);
        assert!(g.is_valid());
        assert!(!EpsSchedule::Constant { c: 0.0 }.is_valid());
    }
}
