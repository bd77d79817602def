//! `stbp`: scenario generation, solving, comparison and validation for the
//! stochastic temporal bin-packing portfolio problem.
//!
//! Exit codes: 0 success, 1 validation or solver failure, 2 usage or parse
//! error.

mod commands;
mod files;
mod report;

use clap::{Parser, Subcommand};
use commands::{Algorithm, CompareArgs, SolveArgs};
use files::UsageError;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "stbp", version, about = "Chance-constrained cloud portfolio solver harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario file from a built-in or custom profile.
    Generate {
        /// Built-in case name (case_1..case_6) or a profile JSON path.
        #[arg(long)]
        profile: String,
        /// Generator seed.
        #[arg(long, env = "STBP_SEED", default_value_t = 0)]
        seed: u64,
        /// Required per-slot success probability.
        #[arg(long = "q-min", default_value_t = stbp_core::datagen::DEFAULT_Q_MIN)]
        q_min: f64,
        /// Output scenario path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve a scenario and optionally write the solution and report rows.
    Solve {
        /// Scenario JSON path.
        #[arg(long)]
        scenario: PathBuf,
        /// Solver to run.
        #[arg(long, value_enum)]
        algorithm: Algorithm,
        /// RNG seed (used by the genetic solver).
        #[arg(long, env = "STBP_SEED", default_value_t = 0)]
        seed: u64,
        /// Generation budget override for the genetic solver.
        #[arg(long)]
        generations: Option<usize>,
        /// Population size override for the genetic solver.
        #[arg(long)]
        population: Option<usize>,
        /// Solution JSON output path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Metrics CSV to append to; a GA run also writes
        /// `<report>.generations.csv` next to it.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run ERICH once and GEORG per seed; write a comparison CSV including
    /// the generation-0 baseline series.
    Compare {
        /// Scenario JSON path.
        #[arg(long)]
        scenario: PathBuf,
        /// GA seeds, comma separated; empty runs ERICH only.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Generation budget override for the genetic solver.
        #[arg(long)]
        generations: Option<usize>,
        /// Population size override for the genetic solver.
        #[arg(long)]
        population: Option<usize>,
        /// Comparison CSV output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-check a solution file against its scenario.
    Validate {
        /// Scenario JSON path.
        #[arg(long)]
        scenario: PathBuf,
        /// Solution JSON path.
        #[arg(long)]
        solution: PathBuf,
    },
    /// Exhaustively solve a desk-scale scenario (at most 4 apps, 4 types,
    /// horizon 8).
    Oracle {
        /// Scenario JSON path.
        #[arg(long)]
        scenario: PathBuf,
        /// Optional solution JSON output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(command: Command) -> anyhow::Result<i32> {
    match command {
        Command::Generate { profile, seed, q_min, out } => {
            commands::cmd_generate(&profile, seed, q_min, &out)
        }
        Command::Solve { scenario, algorithm, seed, generations, population, out, report } => {
            commands::cmd_solve(&SolveArgs {
                scenario,
                algorithm,
                seed,
                generations,
                population,
                out,
                report,
            })
        }
        Command::Compare { scenario, seeds, generations, population, out } => {
            commands::cmd_compare(&CompareArgs { scenario, seeds, generations, population, out })
        }
        Command::Validate { scenario, solution } => commands::cmd_validate(&scenario, &solution),
        Command::Oracle { scenario, out } => commands::cmd_oracle(&scenario, out.as_deref()),
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.is::<UsageError>() {
                2
            } else {
                1
            }
        }
    };
    std::process::exit(code);
}
