use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stcx::commands::{cmd_ablate, cmd_eval, cmd_generate, cmd_gradcheck, cmd_train};
use stcx::config::RunConfig;
use stcx::error::write_file;
use stcx::CliResult;

#[derive(Parser)]
#[command(name = "stcx", version, about = "Spatio-temporal context head: data, training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (key = value lines); defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Checkpoint to write (train) or read (eval).
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,

    /// Report destination; overrides the configured path.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Render the synthetic dataset into the data directory.
    Generate,
    /// Train a head and write a checkpoint.
    Train,
    /// Evaluate a checkpoint on the validation split.
    Eval,
    /// Train and evaluate all five head variants over several seeds.
    Ablate,
    /// Compare analytic and finite-difference gradients.
    Gradcheck,
}

fn run(cli: &Cli) -> CliResult<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(path) = &cli.checkpoint {
        config.checkpoint = path.clone();
    }
    let report_path = cli.out.clone().unwrap_or_else(|| config.report.clone());
    let text = match cli.command {
        Command::Generate => cmd_generate(&config)?,
        Command::Train => cmd_train(&config)?,
        Command::Eval => {
            RunConfig::check_writable(&report_path)?;
            let text = cmd_eval(&config, &config.checkpoint)?;
            write_file(&report_path, &text)?;
            text
        }
        Command::Ablate => {
            RunConfig::check_writable(&report_path)?;
            let (_, text) = cmd_ablate(&config)?;
            write_file(&report_path, &text)?;
            text
        }
        Command::Gradcheck => {
            let result = cmd_gradcheck(&config);
            if let Some(path) = &cli.out {
                let text = match &result {
                    Ok(t) => t.clone(),
                    Err(e) => e.to_string(),
                };
                write_file(path, text)?;
            }
            result?
        }
    };
    print!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors are configuration errors; help and version are not errors.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stcx: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
