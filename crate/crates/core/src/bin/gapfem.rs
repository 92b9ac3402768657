use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gapfem::config::load_config;
use gapfem::experiment::run_experiment;

#[derive(Parser)]
#[command(name = "gapfem", version, about = "Adaptive FEM with primal-dual gap estimators")]
struct Cli {
    /// Log filter, e.g. `info` or `gapfem=debug`.
    #[arg(long, default_value = "info", global = true)]
    log_level: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Solve {
        config: PathBuf,
        #[arg(long, default_value = "output")]
        output_dir: PathBuf,
        /// Accepted for reproducible scripting; all runs are deterministic.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log_level).init();
    match cli.command {
        Command::Solve { config, output_dir, seed: _ } => {
            let result = load_config(&config).and_then(|c| run_experiment(&c, &output_dir));
            match result {
                Ok(report) => {
                    for f in &report.files {
                        println!("{}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
