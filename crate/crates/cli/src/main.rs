use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sors_core::harness::{parse_config_file, run_experiment, smooth_csv, verify_file};
use sors_core::SorsError;

#[derive(Parser)]
#[command(name = "sors", version, about = "Reward shaping from sparse-return rankings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a multi-seed experiment and write per-seed and aggregate CSVs.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `out` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check two rewards of an MDP file for order equivalence and compare
    /// their optimal policies.
    Verify {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        horizon: usize,
    },
    /// Re-smooth the `raw_return` column of a CSV and print it.
    Smooth {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        half_life: f64,
    },
}

/// Bad input (config, arguments, unreadable or malformed files).
const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, e)) => {
            eprintln!("error: {e}");
            ExitCode::from(code)
        }
    }
}

fn input_error(e: SorsError) -> (u8, SorsError) {
    match e {
        SorsError::Config { .. } | SorsError::Parse { .. } | SorsError::Io(_) => (EXIT_CONFIG, e),
        other => (EXIT_RUNTIME, other),
    }
}

fn dispatch(command: Command) -> Result<(), (u8, SorsError)> {
    match command {
        Command::Run { config, out } => {
            let cfg = parse_config_file(&config).map_err(|e| (EXIT_CONFIG, e))?;
            let out = out.unwrap_or_else(|| cfg.out.clone());
            let result = run_experiment(&cfg, &out).map_err(|e| (EXIT_RUNTIME, e))?;
            let mut stdout = io::stdout().lock();
            for s in &result.seeds {
                let last = s.curve.last().map_or(f64::NAN, |p| p.raw_return);
                let acc = s
                    .log
                    .final_holdout_accuracy
                    .map_or_else(|| "n/a".to_string(), |a| format!("{a:.4}"));
                let _ = writeln!(
                    stdout,
                    "seed {}: final return {last}, holdout ranking accuracy {acc}",
                    s.seed
                );
            }
            let _ = writeln!(stdout, "wrote {} files to {}", result.files.len(), out.display());
            Ok(())
        }
        Command::Verify { mdp, horizon } => {
            if horizon == 0 {
                return Err((EXIT_CONFIG, SorsError::Contract("horizon must be positive".into())));
            }
            let report = verify_file(&mdp, horizon).map_err(input_error)?;
            print!("{report}");
            Ok(())
        }
        Command::Smooth { input, half_life } => {
            if !(half_life > 0.0) {
                return Err((EXIT_CONFIG, SorsError::Contract("half-life must be positive".into())));
            }
            let file = File::open(&input).map_err(|e| (EXIT_CONFIG, e.into()))?;
            smooth_csv(BufReader::new(file), io::stdout().lock(), half_life).map_err(input_error)
        }
    }
}
