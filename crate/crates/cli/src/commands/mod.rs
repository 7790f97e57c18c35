//! Subcommand implementations. Each returns the text it reports.

mod ablate;
mod gradcheck;

use std::path::Path;

use stcx_core::synth::CLASS_NAMES;

pub use ablate::{run_ablation, AblationReport, AblationRow, REFERENCE_MAP};
pub use gradcheck::{run_gradcheck, GradCheckLine, GradCheckSummary, EPS, LINEAR_TOLERANCE, TOLERANCE};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::data::{load_dataset, write_dataset};
use crate::error::{write_file, CliError, CliResult};
use crate::train::{evaluate_head, train, Prepared};

pub fn cmd_generate(config: &RunConfig) -> CliResult<String> {
    RunConfig::check_writable(&config.data_dir.join("manifest.csv"))?;
    let n = write_dataset(config)?;
    Ok(format!("wrote {n} clips to {}\n", config.data_dir.display()))
}

/// Trains from the configured seed and writes the checkpoint plus a
/// `<checkpoint>.log` training log.
pub fn cmd_train(config: &RunConfig) -> CliResult<String> {
    RunConfig::check_writable(&config.checkpoint)?;
    let data = Prepared::new(config, &load_dataset(config)?)?;
    let outcome = train(config, &data)?;
    let ckpt = Checkpoint::capture(config, &outcome.head, &outcome.sgd, config.steps as u64);
    ckpt.save(&config.checkpoint)?;
    let log_path = config.checkpoint.with_extension("log");
    write_file(&log_path, &outcome.log)?;
    Ok(outcome.log)
}

/// Evaluates the head stored at `checkpoint` on the val split. Reads only.
pub fn cmd_eval(config: &RunConfig, checkpoint: &Path) -> CliResult<String> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let (head, _) = ckpt.restore(config)?;
    let data = load_dataset(config)?;
    let stub = crate::train::backbone(config)?;
    let samples = crate::train::proposal_samples(&stub, &data.val, config.proposal_threshold)?;
    let result = evaluate_head(&head, &samples, &data.val_ground_truth())?;
    let names: Vec<&str> = CLASS_NAMES.iter().take(config.world.num_classes).copied().collect();
    Ok(result.report(&names))
}

pub fn cmd_ablate(config: &RunConfig) -> CliResult<(AblationReport, String)> {
    let data = Prepared::new(config, &load_dataset(config)?)?;
    let report = run_ablation(config, &data)?;
    let text = report.to_text();
    Ok((report, text))
}

/// Runs the gradient suite; a failed check is a numerical error carrying the
/// full report.
pub fn cmd_gradcheck(config: &RunConfig) -> CliResult<String> {
    let summary = run_gradcheck(config.seed)?;
    let text = summary.to_text();
    if summary.passed() {
        Ok(text)
    } else {
        Err(CliError::Numerical(text))
    }
}
