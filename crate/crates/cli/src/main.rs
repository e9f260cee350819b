use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mvharnack_cli::{run, Command, RunOptions};

/// Checks for distribution dependent stochastic Hamiltonian systems.
#[derive(Debug, Parser)]
#[command(name = "mvharnack", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration.
    config: PathBuf,
    /// Output directory; overrides `checks.output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write x/y series for every study as `plot_*.csv`.
    #[arg(long)]
    plot_data: bool,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let options = RunOptions {
        out_dir: cli.out,
        plot_data: cli.plot_data,
        threads: cli.threads,
    };
    match run(cli.command, &cli.config, &options) {
        Ok(outcome) => {
            for line in &outcome.checks {
                println!("{line}");
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
