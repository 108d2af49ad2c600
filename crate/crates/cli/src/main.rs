//! `bellcert`: simulate noisy strategies, sweep fidelity bounds, run the verifiers.
//!
//! Exit codes: 0 ok, 1 a verification failed, 2 a solve failed, 3 bad input or I/O.

mod grid;
mod verify;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use bellcert_core::npa::{build_program, moment_set, to_sdp, SdpForm};
use bellcert_core::swap::fidelity_functional;
use bellcert_core::{
    behavior_from_strategy, bound_at, sdp_row, Behavior, BoundOptions, BoundResult, Level, Method, Scenario,
    SolverOptions,
};
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::grid::parse_grid;
use crate::verify::Check;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    BadInput(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("check `{0}` failed")]
    CheckFailed(&'static str),
    #[error("{0} of {1} rows did not produce a bound")]
    SolverFailure(usize, usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::SolverFailure(..) => 2,
            CliError::BadInput(_) | CliError::Io { .. } | CliError::Json(_) => 3,
        }
    }
}

macro_rules! bad_input_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::BadInput(e.to_string())
            }
        }
    )*};
}
bad_input_from!(
    bellcert_core::quantum::QuantumError,
    bellcert_core::npa::ProgramError,
    bellcert_core::BoundError,
    bellcert_core::swap::SwapError,
    bellcert_core::analytic::AnalyticError,
    bellcert_core::games::GameError,
    grid::GridError
);

#[derive(Parser)]
#[command(name = "bellcert", version, about = "Device-independent certification of two singlets")]
struct Cli {
    /// Seed for every random draw (only the swap verifier draws).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TestArg {
    /// double_chsh, magic or single_chsh
    #[arg(long, value_parser = parse_scenario)]
    test: Scenario,
}

#[derive(Subcommand)]
enum Command {
    /// Write the behavior of the ideal settings on the noisy state as JSON.
    Simulate {
        #[command(flatten)]
        test: TestArg,
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        /// Output file (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fidelity bounds over an ε grid, as CSV.
    Bound {
        #[command(flatten)]
        test: TestArg,
        /// sdp, analytic or explicit
        #[arg(long, default_value = "sdp", value_parser = parse_method)]
        method: Method,
        /// Single noise value.
        #[arg(long, conflicts_with = "eps_grid")]
        eps: Option<f64>,
        /// `start:step:end` or a comma list.
        #[arg(long)]
        eps_grid: Option<String>,
        /// Moment set: paper (alias full) or reduced.
        #[arg(long, default_value = "reduced", value_parser = parse_level)]
        level: Level,
        #[arg(long, default_value_t = SolverOptions::default().tol)]
        tol: f64,
        #[arg(long, default_value_t = SolverOptions::default().max_iter)]
        max_iter: usize,
        /// Bound a recorded behavior instead of simulating one; --eps then only labels the row.
        #[arg(long, requires = "eps", conflicts_with = "eps_grid")]
        behavior: Option<PathBuf>,
        /// Worker threads for the grid (defaults to the available cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Print solver iterations to stderr.
        #[arg(long)]
        verbose: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Numerical checks of the derivations; JSON report on stdout.
    Verify {
        #[arg(value_enum)]
        check: Check,
        #[command(flatten)]
        test: TestArg,
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        /// Moment set for the feasibility check.
        #[arg(long, default_value = "reduced", value_parser = parse_level)]
        level: Level,
    },
    /// Write the moment program as JSON, optionally with the SDP as sparse triplets.
    DumpProgram {
        #[command(flatten)]
        test: TestArg,
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        #[arg(long, default_value = "reduced", value_parser = parse_level)]
        level: Level,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the embedded SDP in the triplet text format to this file.
        #[arg(long)]
        triplets: Option<PathBuf>,
        /// Embed the full complex matrix without eliminating completeness (the default is the
        /// compressed real form the solver uses).
        #[arg(long)]
        faithful: bool,
    },
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse().map_err(|e: bellcert_core::scenario::UnknownScenario| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: bellcert_core::BoundError| e.to_string())
}

fn parse_level(s: &str) -> Result<Level, String> {
    s.parse().map_err(|e: bellcert_core::npa::ProgramError| e.to_string())
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|source| CliError::Io { path: p.to_path_buf(), source }),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|source| CliError::Io { path: "<stdout>".into(), source })
        }
    }
}

fn check_eps(eps: f64) -> Result<f64, CliError> {
    if (0.0..=1.0).contains(&eps) {
        Ok(eps)
    } else {
        Err(CliError::BadInput(format!("noise parameter {eps} outside [0, 1]")))
    }
}

/// Runs `rows` jobs on a small pool and returns the results in input order.
fn sweep<T: Send>(n: usize, jobs: usize, row: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
    thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, n.max(1)) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= n {
                    break;
                }
                let r = row(k);
                *slots[k].lock().expect("no worker panics while holding a slot") = Some(r);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().expect("unpoisoned").expect("every row ran")).collect()
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { test, eps, out } => {
            let b = behavior_from_strategy(&test.test.noisy_strategy(check_eps(eps)?)?)?;
            write_output(out.as_deref(), &(serde_json::to_string_pretty(&b)? + "\n"))
        }
        Command::Bound { test, method, eps, eps_grid, level, tol, max_iter, behavior, jobs, verbose, out } => {
            let test = test.test;
            if !(tol > 0.0) {
                return Err(CliError::BadInput(format!("tolerance {tol} must be positive")));
            }
            let grid = match (eps, eps_grid) {
                (Some(e), None) => vec![e],
                (None, Some(g)) => parse_grid(&g)?,
                _ => return Err(CliError::BadInput("give --eps or --eps-grid".into())),
            };
            for &e in &grid {
                check_eps(e)?;
            }
            let opts = BoundOptions {
                level,
                solver: SolverOptions { tol, max_iter, verbose },
                form: SdpForm::default(),
            };
            let rows: Vec<Result<BoundResult, CliError>> = match behavior {
                Some(path) => {
                    if method != Method::Sdp {
                        return Err(CliError::BadInput("a recorded behavior can only be bounded with --method sdp".into()));
                    }
                    let text = fs::read_to_string(&path).map_err(|source| CliError::Io { path: path.clone(), source })?;
                    let b: Behavior = serde_json::from_str(&text)?;
                    vec![sdp_row(test, grid[0], &b, &opts).map_err(CliError::from)]
                }
                None => {
                    // reject unsupported combinations before spending time on the grid
                    if method == Method::Analytic && test != Scenario::Magic {
                        return Err(CliError::BadInput(format!("method analytic is not available for {test}")));
                    }
                    let jobs = jobs.unwrap_or_else(|| thread::available_parallelism().map_or(1, |n| n.get()));
                    sweep(grid.len(), jobs, |k| bound_at(test, method, grid[k], &opts).map_err(CliError::from))
                }
            };
            let mut csv = String::from(BoundResult::CSV_HEADER);
            csv.push('\n');
            let mut failed = 0;
            for r in &rows {
                match r {
                    Ok(row) => {
                        if !row.succeeded() {
                            failed += 1;
                        }
                        csv.push_str(&row.csv_row());
                        csv.push('\n');
                    }
                    Err(e) => return Err(CliError::BadInput(e.to_string())),
                }
            }
            write_output(out.as_deref(), &csv)?;
            if failed > 0 {
                return Err(CliError::SolverFailure(failed, rows.len()));
            }
            Ok(())
        }
        Command::Verify { check, test, eps, level } => {
            let report = verify::run(check, test.test, check_eps(eps)?, level, cli.seed)?;
            write_output(None, &(serde_json::to_string_pretty(&report)? + "\n"))?;
            if report.pass {
                Ok(())
            } else {
                Err(CliError::CheckFailed(report.check))
            }
        }
        Command::DumpProgram { test, eps, level, out, triplets, faithful } => {
            let test = test.test;
            let b = behavior_from_strategy(&test.noisy_strategy(check_eps(eps)?)?)?;
            let p = build_program(moment_set(test, level), &b, &fidelity_functional(test))?;
            write_output(out.as_deref(), &(serde_json::to_string(&p.dump())? + "\n"))?;
            if let Some(path) = triplets {
                let form = if faithful { SdpForm::FAITHFUL } else { SdpForm::default() };
                let map = to_sdp(&p, form)?;
                let file = fs::File::create(&path).map_err(|source| CliError::Io { path: path.clone(), source })?;
                map.problem
                    .write_triplets(io::BufWriter::new(file))
                    .map_err(|source| CliError::Io { path: path.clone(), source })?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bellcert: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
