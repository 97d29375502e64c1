use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dncs_cli::{exit, Command, Overrides};

/// Decentralized control over lossy uplinks: thresholds, optimal gains,
/// simulation and verification from a JSON scenario.
#[derive(Debug, Parser)]
#[command(name = "dncs", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Scenario JSON file.
    #[arg(long, global = true, value_name = "PATH")]
    scenario: Option<PathBuf>,

    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Steady-state stopping tolerance.
    #[arg(long, global = true, value_parser = positive_f64)]
    tol: Option<f64>,

    #[arg(long = "max-iter", global = true, value_parser = clap::value_parser!(u64).range(1..))]
    max_iter: Option<u64>,

    /// Monte Carlo runs.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    runs: Option<u64>,

    /// Simulation horizon, or `T` for `finite`.
    #[arg(long, global = true)]
    horizon: Option<u64>,

    /// Trace CSV for `simulate`; needs `sim.record_every > 0`.
    #[arg(long, global = true, value_name = "PATH")]
    trace: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Critical drop probabilities, feasibility verdict and assumption flags.
    Analyze,
    /// Steady-state coupled Riccati solution and gains.
    Solve,
    /// Monte Carlo closed loop under the steady-state strategies.
    Simulate,
    /// Algebraic cross-checks of the solution.
    Verify,
    /// Finite-horizon optimal cost against Monte Carlo.
    Finite,
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        Ok(v) => Err(format!("must be a positive number, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                exit::USAGE
            } else {
                exit::OK
            });
        }
    };
    let cmd = match cli.command {
        Cmd::Analyze => Command::Analyze,
        Cmd::Solve => Command::Solve,
        Cmd::Simulate => Command::Simulate,
        Cmd::Verify => Command::Verify,
        Cmd::Finite => Command::Finite,
    };
    let overrides = Overrides {
        seed: cli.seed,
        tol: cli.tol,
        max_iter: cli.max_iter.map(|v| v as usize),
        runs: cli.runs.map(|v| v as usize),
        horizon: cli.horizon.map(|v| v as usize),
    };
    let outcome = match dncs_cli::execute(
        cmd,
        cli.scenario.as_deref(),
        &overrides,
        cli.trace.as_deref(),
    ) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let written = match &cli.out {
        Some(p) => std::fs::write(p, &outcome.report)
            .map_err(|e| format!("cannot write {}: {e}", p.display())),
        None => std::io::stdout()
            .write_all(outcome.report.as_bytes())
            .map_err(|e| format!("cannot write report: {e}")),
    };
    if let Err(msg) = written {
        eprintln!("error: {msg}");
        return ExitCode::from(exit::NUMERIC);
    }
    eprintln!("{}", outcome.summary);
    ExitCode::from(outcome.code)
}
