//! prepare-data: raw WAVs + aligned text files -> feature files, per-task
//! train/dev manifests, and the joint subword vocabulary.

use std::path::PathBuf;

use anyhow::Result;
use clap::Args as ClapArgs;
use multist_core::config::parse_config;
use multist_core::prepare::prepare_data;

#[derive(ClapArgs)]
pub struct Args {
    /// Raw corpus directory (see README for the layout).
    #[arg(long)]
    raw: PathBuf,
    /// Output directory for features, manifests and the vocabulary.
    #[arg(long)]
    out: PathBuf,
    /// Run configuration (languages, feature and vocabulary settings).
    #[arg(long)]
    config: PathBuf,
    /// Send every k-th row of each manifest to the dev split (0 disables).
    #[arg(long, default_value_t = 10)]
    dev_every: usize,
}

pub fn run(args: Args, _seed: Option<u64>) -> Result<()> {
    let cfg = parse_config(&args.config)?;
    let summary = prepare_data(&args.raw, &args.out, &cfg, args.dev_every)?;
    let rows: Vec<String> = summary
        .rows
        .iter()
        .map(|(task, train, dev)| format!("{task}: {train} train, {dev} dev"))
        .collect();
    println!(
        "prepared {} utterances; vocabulary of {} tokens; {}",
        summary.utterances,
        summary.vocab_size,
        rows.join("; ")
    );
    Ok(())
}
