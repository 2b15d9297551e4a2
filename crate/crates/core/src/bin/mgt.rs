use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mgt_core::cli::runner::{self, CliError, RunOptions, EXIT_CONFIG};

/// Spectral simulation and verification runs for the MGT equation with memory.
#[derive(Parser)]
#[command(name = "mgt", version)]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Simulate even when a hypothesis is violated (violations are still reported).
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one experiment; writes series.csv and report.json.
    Run { config: PathBuf },
    /// Rerun an experiment over a list of parameter values; writes sweep.csv.
    Sweep {
        config: PathBuf,
        /// One of alpha, b, c2, tau, kernel_scale, lambda.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
    },
    /// Characteristic roots over parameter grids; writes stability_map.csv.
    StabilityMap { config: PathBuf },
    /// Check the hypotheses only; writes assumptions.json.
    Check { config: PathBuf },
}

fn parse_values(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| {
            x.parse::<f64>().map_err(|e| CliError {
                code: EXIT_CONFIG,
                message: format!("config error at `--values`: {x:?}: {e}"),
            })
        })
        .collect()
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("MGT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| CliError {
        code: EXIT_CONFIG,
        message: format!("MGT_THREADS must be a positive integer, got {raw:?}"),
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError {
            code: EXIT_CONFIG,
            message: format!("cannot size thread pool: {e}"),
        })
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let opts = RunOptions {
        out: cli.out,
        force: cli.force,
    };
    match cli.command {
        Command::Run { config } => {
            let report = runner::run_experiment(&config, &opts)?;
            println!("{}: {} ({} fits, {} audits)", opts.out.display(), report.status, report.decay_fits.len(), report.audits.len());
            if let Some(c) = &report.conservation {
                println!("conservation drift of {}: {:e}", c.functional, c.drift);
            }
        }
        Command::Sweep { config, param, values } => {
            let values = parse_values(&values)?;
            let rows = runner::sweep(&config, &param, &values, &opts)?;
            let failed = rows.iter().filter(|r| r.exit_code != 0).count();
            println!("{}: {} rows, {failed} not ok", opts.out.join("sweep.csv").display(), rows.len());
        }
        Command::StabilityMap { config } => {
            let n = runner::stability_map(&config, &opts)?;
            println!("{}: {n} rows", opts.out.join("stability_map.csv").display());
        }
        Command::Check { config } => {
            let reports = runner::check(&config, &opts)?;
            println!("{} assumptions satisfied", reports.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
