//! average-checkpoints: parameter-wise mean, either of explicit paths or of
//! the last k epoch checkpoints in a training directory.

use std::fs;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args as ClapArgs;
use multist_core::params::average_checkpoints;
use multist_core::train::list_step_checkpoints;
use multist_core::Error;

#[derive(ClapArgs)]
pub struct Args {
    /// Explicit checkpoint paths to average.
    #[arg(long = "checkpoint")]
    checkpoints: Vec<PathBuf>,
    /// Training output directory to scan for step checkpoints.
    #[arg(long)]
    dir: Option<PathBuf>,
    /// Average over the last k checkpoints of --dir.
    #[arg(long, default_value_t = 10)]
    last: usize,
    /// Output checkpoint path.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: Args) -> Result<()> {
    let mut paths = args.checkpoints.clone();
    if let Some(dir) = &args.dir {
        let found = list_step_checkpoints(dir)?;
        if found.is_empty() {
            return Err(Error::Checkpoint(format!(
                "{}: no step checkpoints found",
                dir.display()
            ))
            .into());
        }
        let start = found.len().saturating_sub(args.last.max(1));
        paths.extend(found[start..].iter().map(|(_, p)| p.clone()));
    }
    if paths.is_empty() {
        return Err(Error::Checkpoint(
            "pass --checkpoint paths and/or --dir with step checkpoints".into(),
        )
        .into());
    }
    let avg = average_checkpoints::<f32>(&paths)?;
    avg.save(&args.out)?;
    // Carry over the architecture manifest so decode can validate the result.
    if let Some(meta) = paths.iter().rev().map(|p| p.with_extension("meta")).find(|m| m.exists()) {
        fs::copy(&meta, args.out.with_extension("meta"))?;
    }
    println!("averaged {} checkpoints -> {}", paths.len(), args.out.display());
    Ok(())
}
