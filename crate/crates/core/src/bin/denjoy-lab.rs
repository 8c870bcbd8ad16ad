use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use denjoy_lab::cli::{exit_code, run_file, Subcommand};

/// Denjoy-domain laboratory: every numeric parameter lives in the JSON config.
#[derive(Parser)]
#[command(name = "denjoy-lab", version)]
struct Args {
    #[arg(value_enum)]
    subcommand: Subcommand,
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV and JSON artifacts.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match run_file(args.subcommand, &args.config, &args.out) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("denjoy-lab {}: {e}", args.subcommand.name());
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
