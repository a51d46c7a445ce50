//! JSONL game transcripts and an independent verifier.
//!
//! Line 1 is the header (parameters, strategy labels, verdict, digest);
//! every further line is one round. Floats are written with 17 significant
//! digits so they reparse to the identical binary64 value. Each round stores
//! the payoff `S(omega, p)` for every outcome and support point, so the
//! verifier re-derives every protocol constraint and invariant without
//! running strategy code.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::defensive::{payoff_scale, round_delta, VALIDITY_TOL};
use crate::protocol::{
    invariant_holds, GameConfig, GameKind, Lineup, Verdict, SIDE_BET_TOL,
};
use crate::simplex::tv_slices;
use crate::TOOL_VERSION;

pub const SCHEMA: &str = "df-transcript/1";

/// Tolerance on the Eq. (4) side bet identity and on recomputed capitals,
/// relative to `max(1, |value|)`.
pub const REPLAY_TOL: f64 = 1e-12;
/// Tolerance on simplex membership of stored points and weights.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("write failed: {0}")]
    SinkFailure(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported schema {found:?}, expected {SCHEMA:?}")]
    SchemaVersionMismatch { found: String },
}

fn parse_err(line: usize, message: impl Into<String>) -> TranscriptError {
    TranscriptError::Parse {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub schema: String,
    pub config: GameConfig,
    pub sceptic: String,
    pub forecaster: String,
    /// Whether the forecaster claims the defensive guarantees; enables the
    /// minimax, diameter, dominance and side bet identity checks.
    pub defensive: bool,
    pub reality: String,
    pub rng: String,
    pub tool_version: String,
    pub verdict: Verdict,
    /// SHA-256 over the canonical header (with an empty digest) and rounds.
    pub digest: String,
}

impl Header {
    pub fn new(
        config: GameConfig,
        sceptic: String,
        forecaster: String,
        defensive: bool,
        lineup: Lineup,
        verdict: Verdict,
    ) -> Self {
        Header {
            schema: SCHEMA.to_string(),
            config,
            sceptic,
            forecaster,
            defensive,
            reality: lineup.reality,
            rng: lineup.rng,
            tool_version: TOOL_VERSION.to_string(),
            verdict,
            digest: String::new(),
        }
    }
}

/// One round. For continuous games the support is the single forecast,
/// `weights = [1]`, `drawn = 0`, `f = [0]` and `F` stays 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundRecord {
    pub n: u64,
    pub support: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub omega: usize,
    pub drawn: usize,
    pub f: Vec<f64>,
    /// `payoff[omega][j] = S(omega, support[j])`.
    pub payoff: Vec<Vec<f64>>,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "F")]
    pub f_cap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub header: Header,
    pub rounds: Vec<RoundRecord>,
}

/// Writes floats as `{:.16e}`: 17 significant digits, exact round trip.
struct ExactFloats;

impl serde_json::ser::Formatter for ExactFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

fn write_line<W: Write, T: Serialize>(sink: &mut W, value: &T) -> io::Result<()> {
    let mut ser = serde_json::Serializer::with_formatter(&mut *sink, ExactFloats);
    value.serialize(&mut ser).map_err(io::Error::other)?;
    sink.write_all(b"\n")
}

fn digest_of(header: &Header, rounds: &[RoundRecord]) -> String {
    let mut blank = header.clone();
    blank.digest.clear();
    let mut buf = Vec::new();
    write_line(&mut buf, &blank).expect("writing to memory cannot fail");
    for r in rounds {
        write_line(&mut buf, r).expect("writing to memory cannot fail");
    }
    hex::encode(Sha256::digest(&buf))
}

impl Transcript {
    /// Assemble a transcript and seal it with its digest.
    pub fn new(header: Header, rounds: Vec<RoundRecord>) -> Self {
        let mut t = Transcript { header, rounds };
        t.reseal();
        t
    }

    /// Recompute the digest after editing the transcript.
    pub fn reseal(&mut self) {
        self.header.digest = digest_of(&self.header, &self.rounds);
    }

    pub fn computed_digest(&self) -> String {
        digest_of(&self.header, &self.rounds)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        write(self, &mut buf).expect("writing to memory cannot fail");
        buf
    }
}

/// Header line followed by one line per round.
pub fn write<W: Write>(t: &Transcript, sink: &mut W) -> Result<(), TranscriptError> {
    write_line(sink, &t.header)?;
    for r in &t.rounds {
        write_line(sink, r)?;
    }
    sink.flush()?;
    Ok(())
}

/// Parse and structurally validate a transcript.
pub fn read<R: BufRead>(source: R) -> Result<Transcript, TranscriptError> {
    let mut lines = source.lines();
    let first = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing header"))?
        .map_err(|e| parse_err(1, e.to_string()))?;
    let value: serde_json::Value =
        serde_json::from_str(&first).map_err(|e| parse_err(1, e.to_string()))?;
    match value.get("schema").and_then(|s| s.as_str()) {
        Some(SCHEMA) => {}
        Some(other) => {
            return Err(TranscriptError::SchemaVersionMismatch {
                found: other.to_string(),
            })
        }
        None => return Err(parse_err(1, "header has no schema field")),
    }
    let header: Header = serde_json::from_value(value).map_err(|e| parse_err(1, e.to_string()))?;
    let m = header.config.outcomes;

    let mut rounds = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| parse_err(lineno, e.to_string()))?;
        let r: RoundRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        structural_problem(&r, rounds.len() as u64 + 1, m).map_or(Ok(()), |msg| Err(parse_err(lineno, msg)))?;
        rounds.push(r);
    }
    Ok(Transcript { header, rounds })
}

/// Shape errors that make a round unreadable as a game record.
fn structural_problem(r: &RoundRecord, expected_n: u64, m: usize) -> Option<String> {
    let len = r.support.len();
    if r.n != expected_n {
        return Some(format!("round number {} but expected {expected_n}", r.n));
    }
    if len == 0 {
        return Some("empty support".into());
    }
    if r.support.iter().any(|p| p.len() != m) {
        return Some(format!("support point dimension differs from M = {m}"));
    }
    if r.weights.len() != len || r.f.len() != len {
        return Some("weights and f must have one entry per support point".into());
    }
    if r.payoff.len() != m || r.payoff.iter().any(|row| row.len() != len) {
        return Some(format!("payoff must be {m} x {len}"));
    }
    if r.omega >= m {
        return Some(format!("omega {} out of range", r.omega));
    }
    if r.drawn >= len {
        return Some(format!("drawn {} outside support", r.drawn));
    }
    None
}

/// Header-level findings are reported at round 0.
pub const HEADER_ROUND: u64 = 0;

pub const CHECK_DIGEST: &str = "digest";
pub const CHECK_STRUCTURE: &str = "structure";
pub const CHECK_SUPPORT: &str = "support";
pub const CHECK_VALIDITY: &str = "sceptic_validity";
pub const CHECK_CAPITAL: &str = "capital_recursion";
pub const CHECK_SIDE_BET_MEAN: &str = "side_bet_mean";
pub const CHECK_MINIMAX: &str = "minimax";
pub const CHECK_SUPPORT_SIZE: &str = "support_size";
pub const CHECK_DIAMETER: &str = "diameter";
pub const CHECK_DOMINANCE: &str = "dominance";
pub const CHECK_SIDE_BET_IDENTITY: &str = "side_bet_identity";
pub const CHECK_VERDICT: &str = "verdict";

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    /// False when the check does not apply to this game or forecaster.
    pub applicable: bool,
    pub checked: usize,
    /// Rounds that failed; header findings use [`HEADER_ROUND`].
    pub failures: Vec<u64>,
}

impl CheckOutcome {
    fn new(name: &'static str, applicable: bool) -> Self {
        CheckOutcome {
            name,
            applicable,
            checked: 0,
            failures: Vec::new(),
        }
    }

    fn record(&mut self, round: u64, ok: bool) {
        if !self.applicable {
            return;
        }
        self.checked += 1;
        if !ok {
            self.failures.push(round);
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub checks: Vec<CheckOutcome>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(CheckOutcome::passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed())
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= REPLAY_TOL * a.abs().max(b.abs()).max(1.0)
}

fn on_simplex(p: &[f64]) -> bool {
    p.iter().all(|x| *x >= -SIMPLEX_TOL) && (p.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL
}

fn support_diameter(support: &[Vec<f64>]) -> f64 {
    let mut d = 0.0f64;
    for (i, a) in support.iter().enumerate() {
        for b in &support[i + 1..] {
            d = d.max(tv_slices(a, b));
        }
    }
    d
}

/// Re-check every protocol constraint and invariant from stored data.
pub fn verify(t: &Transcript) -> VerificationReport {
    let h = &t.header;
    let cfg = &h.config;
    let m = cfg.outcomes;
    let randomized = cfg.game == GameKind::Randomized;
    let defensive = h.defensive;

    let mut digest = CheckOutcome::new(CHECK_DIGEST, true);
    let mut structure = CheckOutcome::new(CHECK_STRUCTURE, true);
    let mut support = CheckOutcome::new(CHECK_SUPPORT, true);
    let mut validity = CheckOutcome::new(CHECK_VALIDITY, true);
    let mut capital = CheckOutcome::new(CHECK_CAPITAL, true);
    let mut bet_mean = CheckOutcome::new(CHECK_SIDE_BET_MEAN, true);
    let mut minimax = CheckOutcome::new(CHECK_MINIMAX, defensive);
    let mut size = CheckOutcome::new(CHECK_SUPPORT_SIZE, true);
    let mut diameter = CheckOutcome::new(CHECK_DIAMETER, defensive && randomized);
    let mut dominance = CheckOutcome::new(CHECK_DOMINANCE, defensive);
    let mut identity = CheckOutcome::new(CHECK_SIDE_BET_IDENTITY, defensive || !randomized);
    let mut verdict = CheckOutcome::new(CHECK_VERDICT, true);

    digest.record(HEADER_ROUND, h.schema == SCHEMA && h.digest == t.computed_digest());

    let (mut k_hat, mut f_hat) = (1.0f64, 1.0f64);
    let mut sup_k = 1.0f64;
    let mut held = true;
    for (i, r) in t.rounds.iter().enumerate() {
        let n = r.n;
        let problem = structural_problem(r, i as u64 + 1, m);
        structure.record(n, problem.is_none());
        if problem.is_some() {
            continue;
        }
        let len = r.support.len();
        let continuous_shape = randomized || (len == 1 && r.weights == [1.0] && r.drawn == 0);
        structure.record(n, continuous_shape);

        let weights_ok = r.weights.iter().all(|w| *w > 0.0)
            && (r.weights.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL;
        support.record(n, weights_ok && r.support.iter().all(|p| on_simplex(p)));

        let column = |j: usize| -> Vec<f64> { (0..m).map(|w| r.payoff[w][j]).collect() };
        let scale = (0..len).map(|j| payoff_scale(&column(j))).fold(1.0, f64::max);
        let valid = (0..len).all(|j| {
            let col = column(j);
            let gain: f64 = col.iter().zip(&r.support[j]).map(|(s, p)| s * p).sum();
            gain <= VALIDITY_TOL * payoff_scale(&col)
        });
        validity.record(n, valid);

        // (a) Stored capitals against the recursion summed from the start,
        // so a single tampered capital fails at its own round only.
        k_hat += r.payoff[r.omega][r.drawn];
        f_hat += r.f[r.drawn];
        capital.record(n, close(r.k, k_hat) && close(r.f_cap, f_hat));

        // (b)
        let mean: f64 = r.weights.iter().zip(&r.f).map(|(w, f)| w * f).sum();
        bet_mean.record(n, mean <= SIDE_BET_TOL * scale);

        // (c)
        let lhs = (0..m)
            .map(|w| r.weights.iter().zip(&r.payoff[w]).map(|(p, s)| p * s).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        let bound = if randomized {
            round_delta(cfg.eps, n) + VALIDITY_TOL * scale
        } else {
            cfg.tol_schedule.tol(cfg.eps_c, n) + REPLAY_TOL * scale
        };
        minimax.record(n, lhs <= bound);

        // (d)
        size.record(n, len <= m);

        // (e)
        diameter.record(n, support_diameter(&r.support) <= cfg.eps_n_schedule.at(n));

        // (f)
        let inv = invariant_holds(cfg.game, cfg.eps, cfg.eps_c, r.k, r.f_cap);
        dominance.record(n, inv);
        held &= inv;
        sup_k = sup_k.max(r.k);

        // (g)
        let ident = if randomized {
            let delta = round_delta(cfg.eps, n);
            (0..len).all(|j| close(r.f[j], (r.payoff[r.omega][j] - delta) / (1.0 + cfg.eps)))
        } else {
            r.f.iter().all(|f| *f == 0.0)
        };
        identity.record(n, ident);
    }

    let v = &h.verdict;
    let played = t.rounds.len() as u64;
    let last_k = t.rounds.last().map_or(1.0, |r| r.k);
    let last_f = t.rounds.last().map_or(1.0, |r| r.f_cap);
    let complete = v.forfeits.is_empty() == (played == cfg.horizon);
    verdict.record(
        HEADER_ROUND,
        v.horizon == cfg.horizon
            && v.rounds_played == played
            && complete
            && v.sup_k == sup_k
            && v.final_k == last_k
            && v.final_f == last_f
            && v.invariant_held == held,
    );

    VerificationReport {
        checks: vec![
            digest, structure, support, validity, capital, bet_mean, minimax, size, diameter,
            dominance, identity, verdict,
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defensive::TolSchedule;
    use crate::protocol::{EpsSchedule, Forfeit, Player};

    fn config(n: u64) -> GameConfig {
        GameConfig {
            game: GameKind::Randomized,
            outcomes: 2,
            horizon: n,
            eps: 0.5,
            eps_c: 0.01,
            eps_n_schedule: EpsSchedule::Constant { c: 0.5 },
            tol_schedule: TolSchedule::InverseSquare,
            enforce_nonnegativity: true,
            seed: 7,
            k0: 2,
            kmax: 16,
        }
    }

    fn sample(rounds: usize) -> Transcript {
        // Point-mass forecasts p = (1 - q, q), S = (1{w=1} - p_1) / 100, outcome 0.
        let eps = 0.5;
        let (mut k, mut f) = (1.0, 1.0);
        let mut sup_k: f64 = 1.0;
        let mut recs = Vec::new();
        for i in 0..rounds {
            let n = i as u64 + 1;
            let q = 0.5 + 0.4 * ((i as f64) * 0.7).sin();
            let s1 = 0.01 * (1.0 - q);
            let s0 = -0.01 * q;
            let fv = (s0 - round_delta(eps, n)) / (1.0 + eps);
            k += s0;
            f += fv;
            sup_k = sup_k.max(k);
            recs.push(RoundRecord {
                n,
                support: vec![vec![1.0 - q, q]],
                weights: vec![1.0],
                omega: 0,
                drawn: 0,
                f: vec![fv],
                payoff: vec![vec![s0], vec![s1]],
                k,
                f_cap: f,
            });
        }
        let held = recs
            .iter()
            .all(|r| invariant_holds(GameKind::Randomized, eps, 0.01, r.k, r.f_cap));
        let verdict = Verdict {
            horizon: rounds as u64,
            rounds_played: rounds as u64,
            sup_k,
            final_k: k,
            final_f: f,
            invariant_held: held,
            forfeits: vec![],
        };
        let lineup = Lineup {
            reality: "scripted".into(),
            rng: "rng:faithful:1".into(),
        };
        let header = Header::new(config(rounds as u64), "linear:c=0,1".into(), "hand".into(), false, lineup, verdict);
        Transcript::new(header, recs)
    }

    #[test]
    fn empty_game_is_header_only() {
        let t = sample(0);
        let bytes = t.to_bytes();
        assert_eq!(bytes.iter().filter(|b| **b == b'\n').count(), 1);
        assert_eq!(read(&bytes[..]).unwrap(), t);
        assert!(verify(&t).all_passed());
    }

    #[test]
    fn round_trip_100_rounds() {
        let t = sample(100);
        let bytes = t.to_bytes();
        let back = read(&bytes[..]).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_bytes(), bytes);
        let report = verify(&back);
        assert!(report.all_passed(), "{report:?}");
    }

    #[test]
    fn seventeen_digits_round_trip_exactly() {
        let mut rng = 0x2545_f491_4f6c_dd1du64;
        for _ in 0..20_000 {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            let x = f64::from_bits(rng);
            if !x.is_finite() {
                continue;
            }
            let mut buf = Vec::new();
            write_line(&mut buf, &x).unwrap();
            let back: f64 = serde_json::from_slice(&buf).unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x:e}");
        }
    }

    #[test]
    fn truncated_file_reports_the_line() {
        let bytes = sample(5).to_bytes();
        let text = String::from_utf8(bytes).unwrap();
        let cut = text.len() - 20;
        let err = read(&text.as_bytes()[..cut]).unwrap_err();
        assert!(matches!(err, TranscriptError::Parse { line: 6, .. }), "{err}");
    }

    #[test]
    fn wrong_schema_is_rejected() {
        let text = String::from_utf8(sample(1).to_bytes()).unwrap().replace(SCHEMA, "df-transcript/2");
        assert!(matches!(
            read(text.as_bytes()),
            Err(TranscriptError::SchemaVersionMismatch { found }) if found == "df-transcript/2"
        ));
    }

    #[test]
    fn tampered_capital_fails_at_that_round_only() {
        let mut t = sample(10);
        t.rounds[4].k += 0.001;
        t.reseal();
        let report = verify(&t);
        assert_eq!(report.check(CHECK_CAPITAL).unwrap().failures, vec![5]);
    }

    #[test]
    fn tampered_weight_fails_support() {
        let mut t = sample(3);
        t.rounds[1].weights[0] = 0.99;
        let report = verify(&t);
        assert_eq!(report.check(CHECK_SUPPORT).unwrap().failures, vec![2]);
        assert!(!report.check(CHECK_DIGEST).unwrap().passed());
    }

    #[test]
    fn unsealed_edit_fails_digest() {
        let mut t = sample(3);
        t.rounds[2].payoff[0][0] -= 1e-6;
        let report = verify(&t);
        assert_eq!(report.check(CHECK_DIGEST).unwrap().failures, vec![HEADER_ROUND]);
    }

    #[test]
    fn verdict_must_match_rounds() {
        let mut t = sample(3);
        t.header.verdict.forfeits.push(Forfeit {
            round: 4,
            player: Player::Sceptic,
            reason: "x".into(),
        });
        t.reseal();
        assert!(!verify(&t).check(CHECK_VERDICT).unwrap().passed());
    }

    #[test]
    fn unknown_round_keys_are_rejected() {
        let text = String::from_utf8(sample(1).to_bytes()).unwrap().replace("\"F\":", "\"G\":");
        assert!(matches!(read(text.as_bytes()), Err(TranscriptError::Parse { line: 2, .. })));
    }
}
