//! evaluate: score an existing hypotheses file against the tgt_text column
//! of a manifest.

use std::fs;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args as ClapArgs;
use multist_core::config::parse_config;
use multist_core::data::Manifest;
use multist_core::metrics::evaluate;
use multist_core::Error;

#[derive(ClapArgs)]
pub struct Args {
    /// Run configuration (for the language registry).
    #[arg(long)]
    config: PathBuf,
    /// Hypotheses file, one line per manifest row (a trailing tab-separated
    /// score column is ignored).
    #[arg(long)]
    hyps: PathBuf,
    /// Manifest with references in tgt_text.
    #[arg(long)]
    manifest: PathBuf,
    /// bleu or wer.
    #[arg(long)]
    metric: String,
    /// Report output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<()> {
    let cfg = parse_config(&args.config)?;
    let manifest = Manifest::read(&args.manifest, &cfg.model.languages)?;
    let body = fs::read_to_string(&args.hyps)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", args.hyps.display())))?;
    let hyps: Vec<String> = body
        .lines()
        .map(|l| l.split('\t').next().unwrap_or("").to_string())
        .collect();
    if hyps.len() != manifest.rows.len() {
        return Err(Error::Data(format!(
            "{} hypotheses for {} manifest rows",
            hyps.len(),
            manifest.rows.len()
        ))
        .into());
    }
    let refs: Vec<String> = manifest.rows.iter().map(|r| r.tgt_text.clone()).collect();
    let report = evaluate(&args.metric, &hyps, &refs)?;
    match args.out {
        Some(path) => {
            fs::write(&path, report.render_tsv())?;
            println!("{}", report.summary_line());
        }
        None => print!("{}", report.render_tsv()),
    }
    Ok(())
}
