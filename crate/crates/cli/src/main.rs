//! `defcast`: run forecasting games, verify transcripts, sweep parameter
//! grids and export capital curves.
//!
//! Exit codes: 0 success, 1 invariant or verification failure, 2 usage or
//! parse error.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use rayon::prelude::*;

use defcast::protocol::Verdict;
use defcast::scenario::{run_scenario, ScenarioConfig};
use defcast::transcript::{self, Transcript, HEADER_ROUND};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "defcast", version, about = "Defensive forecasting game simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Play one scenario and write its transcript.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Re-check a transcript from its stored data.
    Verify {
        transcript: PathBuf,
    },
    /// Play every combination of the config's grid lists.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for transcripts and summary.csv.
        #[arg(long)]
        out: PathBuf,
        /// Concurrent runs (default: one per core).
        #[arg(long)]
        jobs: Option<usize>,
        /// Replace the grid's seed list with this single seed.
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Write the capital curves of a transcript as CSV.
    Export {
        transcript: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        error: error.into(),
    }
}

fn failure(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_FAILURE,
        error: error.into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            seed_override,
        } => cmd_run(&config, &out, seed_override),
        Command::Verify { transcript } => cmd_verify(&transcript),
        Command::Sweep {
            config,
            out,
            jobs,
            seed_override,
        } => cmd_sweep(&config, &out, jobs, seed_override),
        Command::Export { transcript, out } => cmd_export(&transcript, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}

fn load_config(path: &Path) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(usage)?;
    ScenarioConfig::from_json(&text)
        .with_context(|| format!("in {}", path.display()))
        .map_err(usage)
}

fn load_transcript(path: &Path) -> Result<Transcript, Failure> {
    let file = File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(usage)?;
    transcript::read(BufReader::new(file))
        .with_context(|| format!("in {}", path.display()))
        .map_err(usage)
}

fn save_transcript(t: &Transcript, path: &Path) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    transcript::write(t, &mut BufWriter::new(file)).with_context(|| format!("writing {}", path.display()))
}

fn summarize(v: &Verdict) -> String {
    let mut s = format!(
        "rounds {}/{}  sup K {}  final K {}  final F {}  invariant_held {}",
        v.rounds_played, v.horizon, v.sup_k, v.final_k, v.final_f, v.invariant_held
    );
    for f in &v.forfeits {
        s.push_str(&format!("\nforfeit: {:?} at round {}: {}", f.player, f.round, f.reason));
    }
    s
}

fn cmd_run(config: &Path, out: &Path, seed_override: Option<u64>) -> Result<(), Failure> {
    let mut cfg = load_config(config)?;
    if let Some(seed) = seed_override {
        cfg = cfg.with_seed(seed);
    }
    let t = run_scenario(&cfg).map_err(usage)?;
    save_transcript(&t, out).map_err(failure)?;
    let v = &t.header.verdict;
    println!("{}", summarize(v));
    if v.is_success() {
        Ok(())
    } else {
        Err(failure(anyhow::anyhow!("run did not succeed")))
    }
}

fn cmd_verify(path: &Path) -> Result<(), Failure> {
    let t = load_transcript(path)?;
    let report = transcript::verify(&t);
    for c in &report.checks {
        if !c.applicable {
            println!("{:<18} n/a", c.name);
            continue;
        }
        let passed = c.checked - c.failures.len();
        println!("{:<18} {passed}/{} passed", c.name, c.checked);
    }
    let failed: Vec<String> = report
        .failed()
        .map(|c| {
            let first = c.failures[0];
            let at = if first == HEADER_ROUND {
                "header".to_string()
            } else {
                format!("round {first}")
            };
            format!("{} (first at {at})", c.name)
        })
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(failure(anyhow::anyhow!("failed checks: {}", failed.join(", "))))
    }
}

fn cmd_sweep(
    config: &Path,
    out: &Path,
    jobs: Option<usize>,
    seed_override: Option<u64>,
) -> Result<(), Failure> {
    let mut cfg = load_config(config)?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
        if let Some(grid) = cfg.grid.as_mut() {
            grid.seed = vec![seed];
        }
    }
    let (runs, warnings) = cfg.expand_grid();
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(usage)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(usage)?;

    let results: Vec<anyhow::Result<(ScenarioConfig, Verdict)>> = pool.install(|| {
        runs.par_iter()
            .map(|run| {
                let t = run_scenario(run)?;
                let name = format!("run_eps{}_seed{}_N{}.jsonl", run.eps, run.seed, run.horizon);
                save_transcript(&t, &out.join(name))?;
                Ok((run.clone(), t.header.verdict))
            })
            .collect()
    });

    let summary = out.join("summary.csv");
    let mut csv = csv::Writer::from_path(&summary)
        .with_context(|| format!("creating {}", summary.display()))
        .map_err(failure)?;
    let header = ["eps", "seed", "N", "supK", "finalF", "held"];
    csv.write_record(header).map_err(failure)?;
    let mut problems = Vec::new();
    for (run, res) in runs.iter().zip(&results) {
        match res {
            Ok((cfg, v)) => {
                if !v.is_success() {
                    problems.push(format!("eps {} seed {} N {}: {}", cfg.eps, cfg.seed, cfg.horizon, summarize(v)));
                }
                csv.write_record([
                    cfg.eps.to_string(),
                    cfg.seed.to_string(),
                    cfg.horizon.to_string(),
                    v.sup_k.to_string(),
                    v.final_f.to_string(),
                    v.is_success().to_string(),
                ])
                .map_err(failure)?;
            }
            Err(e) => problems.push(format!("eps {} seed {} N {}: {e:#}", run.eps, run.seed, run.horizon)),
        }
    }
    csv.flush().map_err(|e| failure(anyhow::Error::from(e)))?;
    println!("{} runs, {} failed; summary in {}", runs.len(), problems.len(), summary.display());
    if problems.is_empty() {
        Ok(())
    } else {
        for p in &problems {
            eprintln!("failed: {p}");
        }
        Err(failure(anyhow::anyhow!("{} of {} runs failed", problems.len(), runs.len())))
    }
}

fn cmd_export(path: &Path, out: &Path) -> Result<(), Failure> {
    let t = load_transcript(path)?;
    let eps = t.header.config.eps;
    let mut csv = csv::Writer::from_path(out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(failure)?;
    csv.write_record(["n", "K", "F", "(1+eps)F"]).map_err(failure)?;
    for r in &t.rounds {
        csv.write_record([
            r.n.to_string(),
            r.k.to_string(),
            r.f_cap.to_string(),
            ((1.0 + eps) * r.f_cap).to_string(),
        ])
        .map_err(failure)?;
    }
    csv.flush().map_err(|e| failure(anyhow::Error::from(e)))?;
    Ok(())
}
