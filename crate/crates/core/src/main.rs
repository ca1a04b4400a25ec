use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use acqsim::cli::{self, CliError, RunOptions};
use acqsim::dataset::SyntheticParams;

#[derive(Parser)]
#[command(name = "acqsim", version, about = "Label-acquisition strategy simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 1)]
        groups: usize,
        #[arg(long, default_value_t = 0.5)]
        noise_sd: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for repetitions (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Overrides the experiment seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Summarize a runs.csv file.
    Report { runs: PathBuf },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { n, d, groups, noise_sd, seed, out } => {
            let params = SyntheticParams { n, d, n_groups: groups, noise_sd, seed };
            print!("{}", cli::cmd_generate(params, &out)?);
        }
        Command::Run { config, out, jobs, seed } => {
            let o = cli::cmd_run(&config, &RunOptions { out, jobs, seed })?;
            println!(
                "wrote {} runs and {} aggregates to {}",
                o.runs,
                o.aggregates,
                o.output_dir.display()
            );
        }
        Command::Report { runs } => print!("{}", cli::cmd_report(&runs)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
