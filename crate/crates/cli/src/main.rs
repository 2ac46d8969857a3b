use std::path::PathBuf;
use std::process::ExitCode;

use abf_cli::config::ExperimentConfig;
use abf_cli::data::ingest_intraday_csv;
use abf_cli::output::render_table;
use abf_cli::run_experiment;
use anyhow::Result;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "abf", version, about = "Approximate Bayesian forecasting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run { config: PathBuf },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
    /// Convert an intraday or daily CSV into the daily series file.
    Ingest { input: PathBuf, output: PathBuf },
    /// Print a CSV artifact as an aligned table.
    Report { csv: PathBuf },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let s = run_experiment(&cfg)?;
            println!(
                "{}: {} files in {} ({:.1} s)",
                cfg.kind.label(),
                s.files.len() + 1,
                cfg.output_dir.display(),
                s.wall_clock_seconds
            );
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            cfg.validate()?;
            println!("{} ok, fingerprint {}", cfg.kind.label(), cfg.fingerprint()?);
        }
        Command::Ingest { input, output } => {
            let b = ingest_intraday_csv(&input)?;
            b.write_csv(&output)?;
            println!("{} days written, {} dropped", b.len(), b.dropped.len());
            for (date, why) in &b.dropped {
                eprintln!("dropped {date}: {why}");
            }
        }
        Command::Report { csv } => print!("{}", render_table(&csv)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
