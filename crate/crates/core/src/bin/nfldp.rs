use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use nfldp_core::cli::{exit_code, parse_config_for, run, Command, Format};

/// Stochastic neural field experiments: spectra, simulation, exit times and
/// large-deviation quasipotentials.
#[derive(Debug, Parser)]
#[command(name = "nfldp", version)]
struct Args {
    command: Command,
    /// JSON or TOML experiment config (by extension).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let mut cfg = match parse_config_for(&text, Format::from_path(&args.config), args.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(dir) = args.output_dir {
        cfg.output_dir = dir.to_string_lossy().into_owned();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = args.threads {
        cfg.threads = threads;
    }
    match run(&cfg) {
        Ok(outcome) => {
            println!("{}", serde_json::to_string_pretty(&outcome.manifest).expect("manifest serializes"));
            match outcome.flagged {
                Some(reason) => {
                    eprintln!("warning: {reason}");
                    ExitCode::from(4)
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
