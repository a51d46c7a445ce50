//! Scenario files and strategy spec strings.
//!
//! A scenario is a JSON object naming the game parameters and each player
//! by a flat spec string:
//!
//! | player     | specs |
//! |------------|-------|
//! | sceptic    | `zero`, `linear:c=0,1`, `bins:8:0.25`, `k29:eta=0.1,sigma=0.2`, `random`, `random:seed=7` |
//! | forecaster | `defensive`, `uniform`, `frequency` |
//! | reality    | `iid:0.7,0.3`, `adversarial`, `scripted:1,0,1` |
//! | rng        | `rng:faithful`, `rng:faithful:42`, `rng:adversarial` |

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversaries::{
    bin_calibration_sceptic, k29_kernel_sceptic, linear_sceptic, random_valid_sceptic,
    reality_iid, reality_scripted, NaiveForecaster, NaiveKind, Reality, RngPolicy,
    StrategyError, ZeroSceptic,
};
use crate::defensive::TolSchedule;
use crate::protocol::{
    run_game, DefensiveForecaster, EpsSchedule, Forecaster, GameConfig, GameKind, Lineup,
    Sceptic,
};
use crate::simplex::{ProbVector, MAX_DIMENSION};
use crate::transcript::Transcript;

/// Largest number of runs a sweep may expand to.
pub const MAX_SWEEP_RUNS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("config line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("bad {role} spec {spec:?}: {message}")]
    Spec {
        role: &'static str,
        spec: String,
        message: String,
    },
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

fn default_true() -> bool {
    true
}

fn default_forecaster() -> String {
    "defensive".into()
}

fn default_rng() -> String {
    "rng:faithful".into()
}

fn default_tol() -> TolSchedule {
    TolSchedule::InverseSquare
}

fn default_k0() -> usize {
    2
}

fn default_kmax() -> usize {
    16
}

/// Parameter lists for a sweep; every combination is one run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(default)]
    pub eps: Vec<f64>,
    #[serde(default)]
    pub seed: Vec<u64>,
    #[serde(default, rename = "N")]
    pub horizon: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub game: GameKind,
    #[serde(rename = "M")]
    pub outcomes: usize,
    #[serde(rename = "N")]
    pub horizon: u64,
    pub eps: f64,
    pub eps_c: f64,
    pub eps_n_schedule: EpsSchedule,
    #[serde(default = "default_tol")]
    pub tol_schedule: TolSchedule,
    pub sceptic: String,
    #[serde(default = "default_forecaster")]
    pub forecaster: String,
    pub reality: String,
    #[serde(default = "default_rng")]
    pub rng: String,
    pub seed: u64,
    #[serde(default = "default_k0")]
    pub k0: usize,
    #[serde(default = "default_kmax")]
    pub kmax: usize,
    #[serde(default = "default_true")]
    pub enforce_nonnegativity: bool,
    /// Used by sweeps only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<SweepGrid>,
}

impl ScenarioConfig {
    /// Parse and validate a JSON scenario.
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| ScenarioError::Json {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.outcomes < 2 || self.outcomes > MAX_DIMENSION {
            return Err(invalid(format!("M must be in 2..={MAX_DIMENSION}")));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(invalid("eps must be positive"));
        }
        if !(self.eps_c > 0.0 && self.eps_c.is_finite()) {
            return Err(invalid("eps_c must be positive"));
        }
        if !self.eps_n_schedule.is_valid() {
            return Err(invalid("eps_n schedule values must be positive (geometric r in (0, 1])"));
        }
        if self.k0 == 0 || self.kmax < self.k0 {
            return Err(invalid("need 1 <= k0 <= kmax"));
        }
        if let Some(grid) = &self.grid {
            if grid.eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                return Err(invalid("grid eps values must be positive"));
            }
            let runs = grid.eps.len().max(1) * grid.seed.len().max(1) * grid.horizon.len().max(1);
            if runs > MAX_SWEEP_RUNS {
                return Err(invalid(format!("grid expands to {runs} runs, cap is {MAX_SWEEP_RUNS}")));
            }
        }
        // Surface spec errors before any game is played.
        self.build_sceptic()?;
        self.build_forecaster()?;
        self.build_reality()?;
        self.build_rng()?;
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ScenarioConfig {
            seed,
            ..self.clone()
        }
    }

    pub fn game_config(&self) -> GameConfig {
        GameConfig {
            game: self.game,
            outcomes: self.outcomes,
            horizon: self.horizon,
            eps: self.eps,
            eps_c: self.eps_c,
            eps_n_schedule: self.eps_n_schedule,
            tol_schedule: self.tol_schedule,
            enforce_nonnegativity: self.enforce_nonnegativity,
            seed: self.seed,
            k0: self.k0,
            kmax: self.kmax,
        }
    }

    pub fn build_sceptic(&self) -> Result<Box<dyn Sceptic>, ScenarioError> {
        parse_sceptic(&self.sceptic, self.outcomes, derive_seed(self.seed, 3))
    }

    pub fn build_forecaster(&self) -> Result<Box<dyn Forecaster>, ScenarioError> {
        let err = |message: &str| ScenarioError::Spec {
            role: "forecaster",
            spec: self.forecaster.clone(),
            message: message.into(),
        };
        match self.forecaster.trim() {
            "defensive" => Ok(Box::new(DefensiveForecaster::new(&self.game_config()))),
            "uniform" => Ok(Box::new(NaiveForecaster::new(NaiveKind::Uniform))),
            "frequency" => Ok(Box::new(NaiveForecaster::new(NaiveKind::Frequency))),
            _ => Err(err("expected defensive, uniform or frequency")),
        }
    }

    pub fn build_reality(&self) -> Result<Reality, ScenarioError> {
        parse_reality(&self.reality, self.outcomes, derive_seed(self.seed, 1))
    }

    pub fn build_rng(&self) -> Result<RngPolicy, ScenarioError> {
        parse_rng(&self.rng, derive_seed(self.seed, 2))
    }

    /// Every grid combination in eps-major order, with duplicate grid values
    /// dropped. Returns the runs and one warning per dropped value.
    pub fn expand_grid(&self) -> (Vec<ScenarioConfig>, Vec<String>) {
        let grid = self.grid.clone().unwrap_or_default();
        let mut warnings = Vec::new();
        let eps = dedup(
            if grid.eps.is_empty() { vec![self.eps] } else { grid.eps },
            |e| e.to_bits(),
            "eps",
            &mut warnings,
        );
        let seeds = dedup(
            if grid.seed.is_empty() { vec![self.seed] } else { grid.seed },
            |s| *s,
            "seed",
            &mut warnings,
        );
        let horizons = dedup(
            if grid.horizon.is_empty() { vec![self.horizon] } else { grid.horizon },
            |n| *n,
            "N",
            &mut warnings,
        );
        let mut runs = Vec::with_capacity(eps.len() * seeds.len() * horizons.len());
        for &e in &eps {
            for &seed in &seeds {
                for &n in &horizons {
                    runs.push(ScenarioConfig {
                        eps: e,
                        seed,
                        horizon: n,
                        grid: None,
                        ..self.clone()
                    });
                }
            }
        }
        (runs, warnings)
    }
}

fn dedup<T: Copy + std::fmt::Display, K: Eq + std::hash::Hash>(
    values: Vec<T>,
    key: impl Fn(&T) -> K,
    name: &str,
    warnings: &mut Vec<String>,
) -> Vec<T> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for v in values {
        if seen.insert(key(&v)) {
            out.push(v);
        } else {
            warnings.push(format!("duplicate {name} value {v} in grid ignored"));
        }
    }
    out
}

/// Independent stream seed for one consumer of the scenario seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn spec_err(role: &'static str, spec: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Spec {
        role,
        spec: spec.to_string(),
        message: message.into(),
    }
}

fn strategy_err<'a>(role: &'static str, spec: &'a str) -> impl Fn(StrategyError) -> ScenarioError + 'a {
    move |e| spec_err(role, spec, e.to_string())
}

fn parse_list<T: std::str::FromStr>(role: &'static str, spec: &str, text: &str) -> Result<Vec<T>, ScenarioError> {
    text.split(',')
        .map(|x| {
            x.trim()
                .parse::<T>()
                .map_err(|_| spec_err(role, spec, format!("cannot parse {x:?}")))
        })
        .collect()
}

/// `key=value` pairs separated by commas.
fn parse_kv(role: &'static str, spec: &str, text: &str, keys: &[&str]) -> Result<Vec<f64>, ScenarioError> {
    let mut out = vec![None; keys.len()];
    for part in text.split(',') {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| spec_err(role, spec, format!("expected key=value, got {part:?}")))?;
        let idx = keys
            .iter()
            .position(|key| *key == k.trim())
            .ok_or_else(|| spec_err(role, spec, format!("unknown key {k:?}")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| spec_err(role, spec, format!("cannot parse {v:?}")))?;
        out[idx] = Some(v);
    }
    out.into_iter()
        .zip(keys)
        .map(|(v, k)| v.ok_or_else(|| spec_err(role, spec, format!("missing {k}"))))
        .collect()
}

/// Build a Sceptic from its spec string; `default_seed` seeds `random`.
pub fn parse_sceptic(spec: &str, m: usize, default_seed: u64) -> Result<Box<dyn Sceptic>, ScenarioError> {
    const ROLE: &str = "sceptic";
    let spec = spec.trim();
    let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
    match kind {
        "zero" if rest.is_empty() => Ok(Box::new(ZeroSceptic)),
        "linear" => {
            let list = rest
                .strip_prefix("c=")
                .ok_or_else(|| spec_err(ROLE, spec, "expected linear:c=<list>"))?;
            let c: Vec<f64> = parse_list(ROLE, spec, list)?;
            if c.len() != m {
                return Err(spec_err(ROLE, spec, format!("{} coefficients for M = {m}", c.len())));
            }
            Ok(Box::new(linear_sceptic(c).map_err(strategy_err(ROLE, spec))?))
        }
        "bins" => {
            let (bins, frac) = rest
                .split_once(':')
                .ok_or_else(|| spec_err(ROLE, spec, "expected bins:<count>:<fraction>"))?;
            let bins: usize = bins
                .trim()
                .parse()
                .map_err(|_| spec_err(ROLE, spec, "bin count must be an integer"))?;
            let frac: f64 = frac
                .trim()
                .parse()
                .map_err(|_| spec_err(ROLE, spec, "stake fraction must be a number"))?;
            Ok(Box::new(bin_calibration_sceptic(bins, frac).map_err(strategy_err(ROLE, spec))?))
        }
        "k29" => {
            let v = parse_kv(ROLE, spec, rest, &["eta", "sigma"])?;
            Ok(Box::new(k29_kernel_sceptic(v[0], v[1]).map_err(strategy_err(ROLE, spec))?))
        }
        "random" => {
            let seed = if rest.is_empty() {
                default_seed
            } else {
                rest.strip_prefix("seed=")
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| spec_err(ROLE, spec, "expected random:seed=<integer>"))?
            };
            Ok(Box::new(random_valid_sceptic(seed)))
        }
        _ => Err(spec_err(ROLE, spec, "expected zero, linear, bins, k29 or random")),
    }
}

/// Build Reality from its spec string; `iid_seed` seeds `iid`.
pub fn parse_reality(spec: &str, m: usize, iid_seed: u64) -> Result<Reality, ScenarioError> {
    const ROLE: &str = "reality";
    let spec = spec.trim();
    let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
    match kind {
        "adversarial" if rest.is_empty() => Ok(Reality::Adversarial),
        "iid" => {
            let w: Vec<f64> = parse_list(ROLE, spec, rest)?;
            if w.len() != m {
                return Err(spec_err(ROLE, spec, format!("{} weights for M = {m}", w.len())));
            }
            let dist = ProbVector::new(&w).map_err(|e| spec_err(ROLE, spec, e.to_string()))?;
            Ok(reality_iid(dist, iid_seed))
        }
        "scripted" => {
            let outs: Vec<usize> = parse_list(ROLE, spec, rest)?;
            if let Some(bad) = outs.iter().find(|&&w| w >= m) {
                return Err(spec_err(ROLE, spec, format!("outcome {bad} out of range for M = {m}")));
            }
            Ok(reality_scripted(outs))
        }
        _ => Err(spec_err(ROLE, spec, "expected iid, adversarial or scripted")),
    }
}

/// Build the RNG policy; `default_seed` seeds `rng:faithful`.
pub fn parse_rng(spec: &str, default_seed: u64) -> Result<RngPolicy, ScenarioError> {
    const ROLE: &str = "rng";
    let spec = spec.trim();
    match spec.split(':').collect::<Vec<_>>().as_slice() {
        ["rng", "adversarial"] => Ok(RngPolicy::Adversarial),
        ["rng", "faithful"] => Ok(RngPolicy::faithful(default_seed)),
        ["rng", "faithful", seed] => seed
            .trim()
            .parse()
            .map(RngPolicy::faithful)
            .map_err(|_| spec_err(ROLE, spec, "seed must be an integer")),
        _ => Err(spec_err(ROLE, spec, "expected rng:faithful[:seed] or rng:adversarial")),
    }
}

/// Play a validated scenario to completion.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Transcript, ScenarioError> {
    let mut sceptic = cfg.build_sceptic()?;
    let mut forecaster = cfg.build_forecaster()?;
    let mut reality = cfg.build_reality()?;
    let mut rng = cfg.build_rng()?;
    let lineup = Lineup {
        reality: cfg.reality.trim().to_string(),
        rng: cfg.rng.trim().to_string(),
    };
    Ok(run_game(
        &cfg.game_config(),
        sceptic.as_mut(),
        forecaster.as_mut(),
        &mut reality,
        &mut rng,
        &lineup,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "game": "randomized", "M": 2, "N": 20, "eps": 0.1, "eps_c": 0.01,
        "eps_n_schedule": {"kind": "geometric", "a": 0.05, "r": 0.5, "floor": 1e-4},
        "sceptic": "bins:8:0.25", "reality": "iid:0.7,0.3", "rng": "rng:faithful:42",
        "seed": 3
    }"#;

    #[test]
    fn parses_defaults() {
        let cfg = ScenarioConfig::from_json(BASE).unwrap();
        assert_eq!(cfg.forecaster, "defensive");
        assert_eq!(cfg.tol_schedule, TolSchedule::InverseSquare);
        assert!(cfg.enforce_nonnegativity);
        assert_eq!((cfg.k0, cfg.kmax), (2, 16));
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = ScenarioConfig::from_json("{\n  \"game\": \n}").unwrap_err();
        assert!(matches!(err, ScenarioError::Json { line: 3, .. }), "{err}");
    }

    #[test]
    fn rejects_bad_values() {
        let bad_eps = BASE.replace("\"eps\": 0.1", "\"eps\": 0");
        assert!(matches!(ScenarioConfig::from_json(&bad_eps), Err(ScenarioError::Invalid(_))));
        let bad_m = BASE.replace("\"M\": 2", "\"M\": 1");
        assert!(ScenarioConfig::from_json(&bad_m).is_err());
        let bad_iid = BASE.replace("iid:0.7,0.3", "iid:0.7,0.2,0.1");
        assert!(matches!(ScenarioConfig::from_json(&bad_iid), Err(ScenarioError::Spec { role: "reality", .. })));
    }

    #[test]
    fn spec_strings() {
        for ok in ["zero", "linear:c=0,1", "bins:8:0.25", "k29:eta=0.1,sigma=0.2", "random", "random:seed=7"] {
            assert!(parse_sceptic(ok, 2, 0).is_ok(), "{ok}");
        }
        for bad in ["linear:c=0", "bins:1:0.5", "bins:8", "k29:eta=0.1", "k29:eta=0.1,tau=1", "wat"] {
            assert!(parse_sceptic(bad, 2, 0).is_err(), "{bad}");
        }
        assert_eq!(parse_sceptic("linear:c=0,1", 2, 0).unwrap().name(), "linear:c=0,1");
        assert!(matches!(parse_reality("adversarial", 2, 0), Ok(Reality::Adversarial)));
        assert!(parse_reality("scripted:1,0,2", 2, 0).is_err());
        assert!(matches!(parse_rng("rng:adversarial", 0), Ok(RngPolicy::Adversarial)));
        assert!(parse_rng("rng:faithful:x", 0).is_err());
    }

    #[test]
    fn grid_dedups_with_warnings() {
        let mut cfg = ScenarioConfig::from_json(BASE).unwrap();
        cfg.grid = Some(SweepGrid {
            eps: vec![0.1, 0.5, 0.1],
            seed: vec![1, 2, 3, 4, 5, 2],
            horizon: vec![],
        });
        let (runs, warnings) = cfg.expand_grid();
        assert_eq!(runs.len(), 10);
        assert_eq!(warnings.len(), 2);
        assert!(runs.iter().all(|r| r.horizon == 20 && r.grid.is_none()));
    }

    #[test]
    fn zero_horizon_runs_empty() {
        let cfg = ScenarioConfig::from_json(&BASE.replace("\"N\": 20", "\"N\": 0")).unwrap();
        let t = run_scenario(&cfg).unwrap();
        assert!(t.rounds.is_empty());
        assert_eq!((t.header.verdict.final_k, t.header.verdict.final_f), (1.0, 1.0));
        assert!(t.header.verdict.is_success());
    }
}
