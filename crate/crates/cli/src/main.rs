//! `cgrowth`: experiment runner for growth-optimal portfolios under
//! risk-measure constraints.
//!
//! Exit codes: 0 when every requested check passes, 1 when a check fails or
//! a run aborts, 2 for configuration and usage errors.

mod commands;
mod config;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{CommandError, Report};
use crate::config::{ConfigError, ExperimentConfig, Format};
use crate::output::Provenance;

const THREADS_ENV: &str = "CGROWTH_THREADS";

#[derive(Parser, Debug)]
#[command(name = "cgrowth", version, about = "Growth-optimal portfolios under risk-measure constraints")]
struct Cli {
    /// TOML experiment file; built-in defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; overrides `outputs.path`. Standard output by default.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Overrides `sim.paths`.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Suppress the check summary on standard error.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form VaR, TVaR and LEL against Monte Carlo oracles.
    Risk,
    /// Tabulate delta(lambda) and delta*(lambda, x).
    Delta,
    /// Project the Merton proportion on random markets and compare with the oracle.
    Project,
    /// Simulate the configured strategies on common random numbers.
    Simulate,
    /// Run the acceptance suite.
    Verify {
        /// Smaller samples and horizons, for a smoke run.
        #[arg(long)]
        quick: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Risk => "risk",
            Command::Delta => "delta",
            Command::Project => "project",
            Command::Simulate => "simulate",
            Command::Verify { .. } => "verify",
        }
    }
}

fn configure_threads() -> Result<(), ConfigError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| ConfigError(format!("{THREADS_ENV}: expected a positive integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| ConfigError(format!("{THREADS_ENV}: {e}")))
}

fn execute(cli: &Cli) -> Result<(Report, Provenance, Format, Option<PathBuf>), CommandError> {
    configure_threads()?;
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(paths) = cli.paths {
        cfg.sim.paths = paths;
    }
    let format = cli.format.unwrap_or(cfg.outputs.format);
    let out = cli.out.clone().or_else(|| cfg.outputs.path.as_ref().map(PathBuf::from));
    let prov = Provenance {
        command: cli.command.name(),
        seed: cfg.seed,
        config_hash: cfg.hash(),
    };
    let exp = cfg.build()?;
    let report = match &cli.command {
        Command::Risk => commands::cmd_risk(&exp)?,
        Command::Delta => commands::cmd_delta(&exp)?,
        Command::Project => commands::cmd_project(&exp)?,
        Command::Simulate => commands::cmd_simulate(&exp)?,
        Command::Verify { quick } => commands::cmd_verify(&exp, *quick || exp.config.verify.quick, !cli.quiet)?,
    };
    Ok((report, prov, format, out))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let (report, prov, format, out) = match execute(&cli) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(match e {
                CommandError::Config(_) => 2,
                CommandError::Run(_) => 1,
            });
        }
    };

    let bytes = report.table.render(format, &prov);
    let written = match &out {
        Some(path) => std::fs::write(path, &bytes).map_err(|e| format!("{}: {e}", path.display())),
        None => std::io::stdout().write_all(&bytes).map_err(|e| e.to_string()),
    };
    if let Err(e) = written {
        eprintln!("error: cannot write output: {e}");
        return ExitCode::from(1);
    }
    if !cli.quiet {
        for c in &report.checks {
            eprintln!(
                "{} {}: {} (bound {})",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                output::format_float(c.value),
                output::format_float(c.bound)
            );
        }
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
