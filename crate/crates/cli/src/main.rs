use std::path::PathBuf;
use std::process::ExitCode;

use baymeta_cli::config::{Mode, RunConfig, SEED_ENV};
use baymeta_cli::{report, run, CliError};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "baymeta", version, about = "Few-shot anomaly detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// Run the property-check suite with default settings.
    Checks {
        #[arg(long, default_value = "runs/checks")]
        output_dir: PathBuf,
    },
    /// Print the metrics of a finished run.
    Report { run_dir: PathBuf },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config } => {
            let cfg = RunConfig::load(&config)?;
            let summary = run(&cfg)?;
            eprintln!(
                "wrote {} artifacts to {}",
                summary.artifacts.len(),
                cfg.output_dir.display()
            );
            print!("{}", report::render(&cfg.output_dir)?);
        }
        Command::Checks { output_dir } => {
            let mut cfg = RunConfig {
                mode: Mode::Checks,
                output_dir: output_dir.clone(),
                ..RunConfig::default()
            };
            cfg.apply_seed_override(std::env::var(SEED_ENV).ok().as_deref())?;
            let outcome = run(&cfg);
            if output_dir.join(baymeta_cli::artifacts::SUMMARY_FILE).is_file() {
                print!("{}", report::render(&output_dir)?);
            }
            outcome?;
        }
        Command::Report { run_dir } => print!("{}", report::render(&run_dir)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
