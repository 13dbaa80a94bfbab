//! train: run the curriculum over a prepared data directory.

use std::path::PathBuf;

use anyhow::Result;
use clap::Args as ClapArgs;
use multist_core::config::parse_config;
use multist_core::train::{train_with_options, TrainOptions};

#[derive(ClapArgs)]
pub struct Args {
    /// Run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Continue from the latest checkpoint in out_dir.
    #[arg(long)]
    resume: bool,
    /// Stop (without saving) after this many completed steps; used to
    /// exercise interruption + resume.
    #[arg(long)]
    max_steps: Option<usize>,
}

pub fn run(args: Args, seed: Option<u64>) -> Result<()> {
    let mut cfg = parse_config(&args.config)?;
    if let Some(seed) = seed {
        cfg.train.seed = seed;
    }
    let report = train_with_options::<f32>(
        &cfg,
        &TrainOptions { resume: args.resume, max_steps: args.max_steps },
    )?;
    let last = report.records.last();
    println!(
        "trained {} steps; final {} loss {:.4}; skipped: {} infeasible-ctc, {} non-finite-grad",
        report.records.last().map(|r| r.step).unwrap_or(0),
        last.map(|r| r.task.name()).unwrap_or("-"),
        last.map(|r| r.raw_loss).unwrap_or(f64::NAN),
        report.skipped_infeasible_ctc,
        report.skipped_non_finite_grad
    );
    if !report.final_checkpoint.as_os_str().is_empty() {
        println!("final checkpoint: {}", report.final_checkpoint.display());
    }
    println!("loss log: {}", report.log_path.display());
    Ok(())
}
