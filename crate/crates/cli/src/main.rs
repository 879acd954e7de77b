use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use mvsc_cli::output::Failure;
use mvsc_cli::{execute, load_config, Command, ConfigError, Suite, WORKERS_ENV};
use serde::Serialize;

/// Adjoint-based optimal control of McKean-Vlasov stochastic reaction-diffusion equations.
#[derive(Parser, Debug)]
#[command(name = "mvsc", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Also write gnuplot scripts next to the CSV files.
    #[arg(long)]
    emit_gnuplot: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Simulate the controlled particle system with the initial control.
    Simulate,
    /// Compare adjoint gradient, tangent route and central differences.
    Gradcheck {
        #[arg(long, default_value_t = 5)]
        dirs: usize,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
    },
    /// Projected gradient descent with Armijo backtracking.
    Optimize {
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Built-in verification suites.
    Verify {
        #[arg(long, default_value = "all", value_parser = |s: &str| s.parse::<Suite>())]
        suite: Suite,
    },
}

#[derive(Serialize)]
struct FailureSummary<'a> {
    status: &'static str,
    kind: &'static str,
    command: &'a str,
    failures: Vec<Failure>,
}

const EXIT_VERIFICATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

fn report(kind: &'static str, command: &str, failures: Vec<Failure>, code: u8) -> ExitCode {
    let summary = FailureSummary {
        status: "failed",
        kind,
        command,
        failures,
    };
    eprintln!("{}", serde_json::to_string(&summary).expect("serializable summary"));
    ExitCode::from(code)
}

fn configure_workers() -> Result<()> {
    if let Ok(value) = std::env::var(WORKERS_ENV) {
        let n: usize = value
            .parse()
            .with_context(|| format!("{WORKERS_ENV} must be a positive integer, got {value:?}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match cli.command {
        Cmd::Simulate => Command::Simulate,
        Cmd::Gradcheck { dirs, eps } => Command::Gradcheck { dirs, eps },
        Cmd::Optimize { max_iters, tol } => Command::Optimize { max_iters, tol },
        Cmd::Verify { suite } => Command::Verify { suite },
    };
    let name = command.name();
    if let Err(e) = configure_workers() {
        return report(
            "environment",
            name,
            vec![Failure::new(WORKERS_ENV, format!("{e:#}"))],
            EXIT_CONFIG,
        );
    }
    let cfg = match load_config(&cli.config) {
        Ok(cfg) => cfg,
        Err(ConfigError::Invalid(violations)) => {
            let failures = violations.iter().map(|v| Failure::new(&v.field, &v.rule)).collect();
            return report("config", name, failures, EXIT_CONFIG);
        }
        Err(e) => return report("config", name, vec![Failure::new("config", e.to_string())], EXIT_CONFIG),
    };
    let out_dir = cli.out.unwrap_or_else(|| cfg.output_dir.clone());
    match execute(&cfg, &cli.config, &command, &out_dir, cli.emit_gnuplot) {
        Ok(outcome) if outcome.passed() => {
            println!("{name}: ok ({} files in {})", outcome.outputs.len(), out_dir.display());
            ExitCode::SUCCESS
        }
        Ok(outcome) => report("verification", name, outcome.failures, EXIT_VERIFICATION),
        Err(e) => report(
            "solver",
            name,
            vec![Failure::new("solver", format!("{e:#}"))],
            EXIT_SOLVER,
        ),
    }
}
