mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use commands::CliError;
use config::{Flags, RunConfig};
use capax_core::CapaxError;
use serde_json::json;
use std::io::Write;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "capax", version, about = "Capacities, Wolff potentials and embedding checks for the fractional extension")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the kernel p_t on the grid.
    Kernel(Flags),
    /// Extend a boundary function to the half-space ladder.
    Extend(Flags),
    /// Dirichlet-to-Neumann map of a boundary function.
    Dtn(Flags),
    /// Energy identity ratio.
    Energy(Flags),
    /// Capacity of a union of half-space boxes.
    Capacity(Flags),
    /// Ball scaling and the bounds sweep.
    BallSweep(Flags),
    /// Capacitary strong-type surrogate.
    Strongtype(Flags),
    /// Wolff potentials at the atoms and the energy comparison.
    Wolff(Flags),
    /// Parabolic maximal function and its comparison with the adjoint.
    Maximal(Flags),
    /// Fractional perimeter of a boundary set.
    Perimeter(Flags),
    /// Coarea check.
    Coarea(Flags),
    /// Fractional Sobolev capacity of a boundary set.
    Fraccap(Flags),
    /// Capacitary embedding criteria for a measure.
    EmbedCheck(Flags),
    /// Empirical trace ratio over a test family.
    EmpiricalRatio(Flags),
    /// The acceptance battery.
    Suite(Flags),
}

impl Command {
    fn split(self) -> (&'static str, Flags) {
        match self {
            Command::Kernel(f) => ("kernel", f),
            Command::Extend(f) => ("extend", f),
            Command::Dtn(f) => ("dtn", f),
            Command::Energy(f) => ("energy", f),
            Command::Capacity(f) => ("capacity", f),
            Command::BallSweep(f) => ("ball-sweep", f),
            Command::Strongtype(f) => ("strongtype", f),
            Command::Wolff(f) => ("wolff", f),
            Command::Maximal(f) => ("maximal", f),
            Command::Perimeter(f) => ("perimeter", f),
            Command::Coarea(f) => ("coarea", f),
            Command::Fraccap(f) => ("fraccap", f),
            Command::EmbedCheck(f) => ("embed-check", f),
            Command::EmpiricalRatio(f) => ("empirical-ratio", f),
            Command::Suite(f) => ("suite", f),
        }
    }
}

const CONFIG_FAILURE: u8 = 2;
const CONTRACT_FAILURE: u8 = 1;

fn fail(code: u8, kind: &str, message: &str) -> ExitCode {
    eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
    ExitCode::from(code)
}

/// Invalid input is a configuration error; numerical breakdowns are contract failures.
fn classify(e: &CapaxError) -> (u8, &'static str) {
    match e {
        CapaxError::InvalidParameter { .. } => (CONFIG_FAILURE, "invalid-parameter"),
        CapaxError::GridMismatch(_) => (CONFIG_FAILURE, "grid-mismatch"),
        CapaxError::BudgetExceeded { .. } => (CONFIG_FAILURE, "budget-exceeded"),
        CapaxError::Unsupported(_) => (CONFIG_FAILURE, "unsupported"),
        CapaxError::Parse { .. } => (CONFIG_FAILURE, "parse"),
        CapaxError::Io(_) => (CONFIG_FAILURE, "io"),
        CapaxError::NonConvergence { .. } => (CONTRACT_FAILURE, "non-convergence"),
        CapaxError::QuadratureNonConvergence(_) => (CONTRACT_FAILURE, "quadrature-non-convergence"),
        CapaxError::Unconverged(_) => (CONTRACT_FAILURE, "unconverged"),
    }
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("CAPAX_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("CAPAX_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(CONFIG_FAILURE, "usage", e.to_string().trim()),
    };
    if let Err(e) = init_threads() {
        return fail(CONFIG_FAILURE, "threads", &e);
    }
    let (name, flags) = cli.command.split();
    let cfg = match RunConfig::resolve(name, flags) {
        Ok(c) => c,
        Err(e) => return fail(CONFIG_FAILURE, "config", &e.0),
    };
    let report = match commands::dispatch(&cfg) {
        Ok(r) => r,
        Err(CliError::Config(msg)) => return fail(CONFIG_FAILURE, "config", &msg),
        Err(CliError::Core(e)) => {
            let (code, kind) = classify(&e);
            return fail(code, kind, &e.to_string());
        }
    };
    let written = match &cfg.output {
        Some(path) => std::fs::File::create(path)
            .and_then(|f| {
                let mut w = std::io::BufWriter::new(f);
                output::write_report(&cfg, &report, &mut w)?;
                w.flush()
            }),
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            output::write_report(&cfg, &report, &mut w).and_then(|_| w.flush())
        }
    };
    if let Err(e) = written {
        return fail(CONFIG_FAILURE, "io", &e.to_string());
    }
    if report.holds() {
        ExitCode::SUCCESS
    } else {
        let failed: Vec<&str> = report.contracts.iter().filter(|c| !c.holds).map(|c| c.name.as_str()).collect();
        eprintln!("{}", json!({ "contract_failures": failed }));
        ExitCode::from(CONTRACT_FAILURE)
    }
}
