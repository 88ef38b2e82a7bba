//! `phenocausal`: simulate exemplars, classify actions, run discovery and
//! the consistency verifiers.
//!
//! Exit status is 0 on success, 1 when a verification or claim check fails
//! and 2 on usage or input errors.

mod commands;
mod params;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Version of the JSON output layout, recorded in every document.
pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] phenocausal::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Whether a command's checks held.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "phenocausal", version, about = "Causal structure induced by elementary actions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate an exemplar and write its samples as CSV.
    ///
    /// Parameters are given as `--key value` after the name (`value` is read
    /// as JSON when possible). Reserved options: `--seed S` (required),
    /// `--samples N` (default 10000), `--out FILE.csv`. With `--out`, the
    /// ground truth and parameters go to a sidecar `FILE.graph.json`.
    #[command(override_usage = "phenocausal exemplar <NAME> [--key value]... --seed <S> [--samples <N>] [--out <FILE>]")]
    Exemplar {
        /// Exemplar name, or `list`.
        name: String,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, hide = true)]
        rest: Vec<String>,
    },
    /// Classify an exemplar's actions against its declared graph or a given
    /// one, optionally enumerating every valid graph.
    ///
    /// Parameters as for `exemplar`. Reserved options: `--graph FILE`
    /// (JSON or `a -> b` lines), `--all`, `--cap N` (default 5), `--out FILE`.
    #[command(override_usage = "phenocausal classify <NAME> [--key value]... [--graph <FILE>] [--all] [--cap <N>] [--out <FILE>]")]
    Classify {
        name: String,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, hide = true)]
        rest: Vec<String>,
    },
    /// Estimate structure from CSV data.
    Discover {
        /// bivariate, multivariate or shift.
        #[arg(long)]
        method: String,
        /// Input CSV; repeat for further environments (shift).
        #[arg(long = "in", required = true)]
        inputs: Vec<PathBuf>,
        /// Graph for shift localization: JSON, edge list, or an exemplar
        /// sidecar.
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Cause candidate for the bivariate method (default: first column).
        #[arg(long)]
        x: Option<String>,
        /// Effect candidate for the bivariate method (default: second column).
        #[arg(long)]
        y: Option<String>,
        /// Seed of the permutation tests.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        permutations: Option<usize>,
        /// Coefficient pruning threshold (multivariate).
        #[arg(long)]
        prune: Option<f64>,
        /// Total-variation floor for a changed conditional (shift).
        #[arg(long)]
        eps: Option<f64>,
        /// Family-wise level (shift).
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the randomized consistency verifiers.
    Verify {
        /// identifiability, embedding, boundary or all; repeatable or
        /// comma-separated.
        #[arg(long, value_delimiter = ',', default_value = "all")]
        which: Vec<String>,
        /// Trials per verifier (default: each verifier's own count).
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check every exemplar's declared graph and run the verifiers.
    Report {
        #[arg(long)]
        seed: u64,
        /// Trials per verifier.
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Largest graph enumerated when checking claims.
        #[arg(long, default_value_t = 4)]
        cap: usize,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    match cli.command {
        Command::Exemplar { name, rest } => commands::exemplar(&name, &rest),
        Command::Classify { name, rest } => commands::classify(&name, &rest),
        Command::Discover {
            method,
            inputs,
            graph,
            x,
            y,
            seed,
            permutations,
            prune,
            eps,
            alpha,
            out,
        } => commands::discover(&commands::DiscoverArgs {
            method,
            inputs,
            graph,
            pair: (x, y),
            seed,
            permutations,
            prune,
            eps,
            alpha,
            out,
        }),
        Command::Verify {
            which,
            trials,
            seed,
            jobs,
            format,
            out,
        } => commands::verify(&which, trials, seed, jobs, format, out.as_deref()),
        Command::Report {
            seed,
            trials,
            cap,
            jobs,
            format,
            out,
        } => commands::report(seed, trials, cap, jobs, format, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
