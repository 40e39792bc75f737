use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ctmc_lab_cli::{cli_run, cli_sweep, fit_csv, init_thread_pool, CliError, ExperimentConfig, SweepSpec};

/// Discrete-diffusion sampling experiments.
#[derive(Parser)]
#[command(name = "ctmc-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and emit its JSONL record.
    Run { config: PathBuf },
    /// Run a cross-product sweep and emit a CSV table.
    Sweep { spec: PathBuf },
    /// Check a config against the schema without running it.
    Validate { config: PathBuf },
    /// Fit a log-log slope between two CSV columns.
    Fit {
        csv: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
    },
}

fn dispatch(command: Command) -> Result<(), CliError> {
    init_thread_pool()?;
    match command {
        Command::Run { config } => {
            let config = ExperimentConfig::load(&config)?;
            let report = cli_run(&config)?;
            eprintln!("wall-clock: {:.3}s", report.wall_clock.as_secs_f64());
        }
        Command::Sweep { spec } => {
            let spec = SweepSpec::load(&spec)?;
            let rows = match &spec.output {
                Some(path) => cli_sweep(&spec, File::create(path)?)?,
                None => cli_sweep(&spec, std::io::stdout().lock())?,
            };
            eprintln!("{rows} sweep points");
        }
        Command::Validate { config } => {
            let config = ExperimentConfig::load(&config)?;
            println!("ok {}", config.hash());
        }
        Command::Fit { csv, x, y } => {
            let fit = fit_csv(&csv, &x, &y)?;
            if fit.dropped > 0 {
                eprintln!("warning: dropped {} rows with non-positive or missing values", fit.dropped);
            }
            let mut out = std::io::stdout().lock();
            writeln!(out, "{}", serde_json::to_string(&fit).expect("fit serializes"))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
