use std::path::PathBuf;
use std::process::ExitCode;

use activeclust_cli::{fit_loglog_slope, run_experiment, run_single, CliError, ExperimentConfig, SlopeY};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bench", about = "Run active clustering experiments on synthetic hierarchies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep and write trials.csv and summary.csv
    Run {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run one algorithm on one instance and write the tree, trace and query report
    Single {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Fit a log-log slope of queries or time against n from a summary CSV
    Slope {
        summary: PathBuf,
        #[arg(long, default_value = "n")]
        x: String,
        #[arg(long, default_value = "queries")]
        y: SlopeY,
        #[arg(long)]
        algorithm: Option<String>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            output_dir,
            workers,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            if workers == Some(0) {
                return Err(CliError::Config("--workers must be >= 1".into()));
            }
            let out = run_experiment(&cfg, output_dir.as_deref(), workers)?;
            println!(
                "{} records, {} summary rows -> {}",
                out.records.len(),
                out.summary.len(),
                out.trials_csv
                    .parent()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default()
            );
        }
        Command::Single { config, output_dir } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = run_single(&cfg, output_dir.as_deref())?;
            println!("tree: {}", out.tree_file.display());
            println!("trace: {}", out.trace_file.display());
            println!(
                "queried {} unique pairs ({:.4} of all)",
                out.report.unique_pairs_queried, out.report.fraction_of_total
            );
        }
        Command::Slope {
            summary,
            x,
            y,
            algorithm,
        } => {
            if x != "n" {
                return Err(CliError::Config(format!("only --x n is supported, got `{x}`")));
            }
            let fit = fit_loglog_slope(&summary, y, algorithm.as_deref())?;
            println!("slope\t{}\nresidual\t{}", fit.slope, fit.residual);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bench: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
