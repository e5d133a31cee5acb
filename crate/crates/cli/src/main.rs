//! `remeta`: random-effects meta-analysis from the command line.
//!
//! Two subcommands: `analyze` pools one study CSV and reports the three
//! interval constructions; `simulate` reproduces the coverage grid and
//! writes per-cell statistics as CSV.
//!
//! Exit status: 0 iff the requested artifact was fully produced, 2 for
//! usage errors (bad flags or axis values), 1 for runtime failures
//! (unreadable input, malformed data, unwritable output).

mod grid_csv;
mod input;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use remeta::{analyze, run_grid, Estimator, Scenario};

#[derive(Parser)]
#[command(
    name = "remeta",
    version,
    about = "Random-effects meta-analysis and interval-coverage simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pool one study CSV and report estimates and confidence intervals
    Analyze(AnalyzeArgs),
    /// Run the simulation grid and write coverage statistics as CSV
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Input CSV with header `label,estimate,stderr`
    #[arg(long)]
    input: PathBuf,
    /// Heterogeneity estimator: dl, reml, or pm
    #[arg(long, default_value = "dl")]
    estimator: String,
    /// Two-sided significance level, in (0, 1)
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Output format: table, json, or forest
    #[arg(long, default_value = "table")]
    format: String,
}

#[derive(Args)]
struct SimulateArgs {
    /// Comma-separated scenario letters
    #[arg(long, default_value = "A,B,C,D")]
    scenarios: String,
    /// Number of studies: a single value or an inclusive range `min..max`
    #[arg(long, default_value = "2..11")]
    k: String,
    /// Comma-separated relative-heterogeneity values, each in [0, 1)
    #[arg(long, default_value = "0,0.25,0.5,0.75,0.9")]
    i2: String,
    /// Comma-separated estimators out of dl, reml, pm
    #[arg(long, default_value = "dl,reml,pm")]
    estimators: String,
    /// Two-sided significance level, in (0, 1)
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Monte Carlo replicates per cell
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    /// Master seed; every cell and replicate derives its stream from it
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
}

/// Failures carry their exit code class: usage problems are the caller
/// holding the tool wrong (exit 2); runtime problems are the environment
/// or the data (exit 1).
enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn check_alpha(alpha: f64) -> Result<(), Failure> {
    if !alpha.is_finite() || !(0.0..1.0).contains(&alpha) || alpha == 0.0 {
        return Err(usage(format!(
            "--alpha must lie strictly between 0 and 1, got {alpha}"
        )));
    }
    Ok(())
}

fn parse_list<T: FromStr>(raw: &str, what: &str) -> Result<Vec<T>, Failure>
where
    T::Err: std::fmt::Display,
{
    let mut out = Vec::new();
    for part in raw.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        out.push(
            part.parse::<T>()
                .map_err(|e| usage(format!("invalid {what} value {part:?}: {e}")))?,
        );
    }
    if out.is_empty() {
        return Err(usage(format!("at least one {what} value is required")));
    }
    Ok(out)
}

/// Parses `min..max` (inclusive) or a single value.
fn parse_k_range(raw: &str) -> Result<(usize, usize), Failure> {
    let raw = raw.trim();
    let parse_one = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| usage(format!("invalid k value {s:?}: expected an integer")))
    };
    let (lo, hi) = match raw.split_once("..") {
        Some((a, b)) => (parse_one(a)?, parse_one(b)?),
        None => {
            let v = parse_one(raw)?;
            (v, v)
        }
    };
    if lo < 2 {
        return Err(usage(format!("--k must be at least 2, got {lo}")));
    }
    if lo > hi {
        return Err(usage(format!("--k range {lo}..{hi} is empty")));
    }
    Ok((lo, hi))
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<(), Failure> {
    check_alpha(args.alpha)?;
    let estimator = Estimator::from_str(&args.estimator)
        .map_err(|_| usage(format!(
            "invalid --estimator {:?}: expected dl, reml, or pm",
            args.estimator
        )))?;
    let format = args.format.as_str();
    if !["table", "json", "forest"].contains(&format) {
        return Err(usage(format!(
            "invalid --format {:?}: expected table, json, or forest",
            args.format
        )));
    }

    let text = std::fs::read_to_string(&args.input)
        .with_context(|| format!("cannot read input file {}", args.input.display()))?;
    let dataset = input::parse_study_csv(&text)
        .with_context(|| format!("cannot parse {}", args.input.display()))?;
    let result = analyze(&dataset, estimator, args.alpha)
        .map_err(|e| Failure::Runtime(anyhow::anyhow!("{e}")))?;

    let rendered = match format {
        "table" => report::render_table(&result),
        "json" => report::render_json(&result),
        "forest" => report::render_forest(&dataset, &result)?,
        _ => unreachable!("format validated above"),
    };
    print!("{rendered}");
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Failure> {
    check_alpha(args.alpha)?;
    let scenarios: Vec<Scenario> = parse_list(&args.scenarios, "scenario")?;
    let (k_min, k_max) = parse_k_range(&args.k)?;
    let i2_values: Vec<f64> = parse_list(&args.i2, "i2")?;
    for &v in &i2_values {
        if !v.is_finite() || !(0.0..1.0).contains(&v) {
            return Err(usage(format!("--i2 values must lie in [0, 1), got {v}")));
        }
    }
    let estimators: Vec<Estimator> = parse_list(&args.estimators, "estimator")?;
    if args.reps == 0 {
        return Err(usage("--reps must be at least 1"));
    }

    let results = run_grid(
        &scenarios,
        k_min..=k_max,
        &i2_values,
        &estimators,
        args.alpha,
        args.reps,
        args.seed,
    )
    .map_err(|e| Failure::Runtime(anyhow::anyhow!("{e}")))?;
    let csv = grid_csv::render_grid_csv(&results);
    std::fs::write(&args.out, &csv)
        .with_context(|| format!("cannot write output file {}", args.out.display()))?;
    eprintln!(
        "wrote {} rows ({} cells) to {}",
        csv.lines().count() - 1,
        results.len(),
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Analyze(args) => cmd_analyze(args),
        Command::Simulate(args) => cmd_simulate(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
