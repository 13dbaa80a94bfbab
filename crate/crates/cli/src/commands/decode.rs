//! decode: beam-search every manifest row with one checkpoint or an
//! ensemble of up to three, writing one hypothesis line per row in manifest
//! order. With --report, also scores against the manifest references (BLEU
//! for st/nmt, WER for asr).

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::Args as ClapArgs;
use multist_core::audio::read_features;
use multist_core::config::{parse_config, FullConfig};
use multist_core::data::Manifest;
use multist_core::decode::{beam_search, default_max_len, DecodeConfig, ModelScorer};
use multist_core::losses::Task;
use multist_core::metrics::evaluate;
use multist_core::model::{frontend_output_len, Forward, Model};
use multist_core::params::ParameterStore;
use multist_core::text::{Vocabulary, BLANK, BOS, PAD, UNK};
use multist_core::train::check_meta_compatible;
use multist_core::Error;

type F = f32;

#[derive(ClapArgs)]
pub struct Args {
    /// Run configuration (model architecture and decode defaults).
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint path; repeat up to three times for ensemble decoding.
    #[arg(long = "checkpoint", required = true)]
    checkpoints: Vec<PathBuf>,
    /// Vocabulary produced by prepare-data.
    #[arg(long)]
    vocab: PathBuf,
    /// Manifest of rows to decode.
    #[arg(long)]
    manifest: PathBuf,
    /// Task: st, nmt or asr.
    #[arg(long)]
    task: String,
    /// Target language; defaults to each row's tgt_lang column.
    #[arg(long)]
    tgt_lang: Option<String>,
    /// Beam size; defaults to the config [decode] beam.
    #[arg(long)]
    beam: Option<usize>,
    /// Hypotheses output file.
    #[arg(long)]
    out: PathBuf,
    /// Append a tab-separated cumulative log-probability column.
    #[arg(long)]
    scores: bool,
    /// Also score against the manifest references and write a report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

/// Structural architecture check: the checkpoint must expose exactly the
/// parameter names and shapes this configuration implies.
fn check_structure(cfg: &FullConfig, store: &ParameterStore<F>, path: &Path) -> Result<()> {
    let expected = multist_core::model::init_params::<F>(&cfg.model, 0);
    if expected.len() != store.len()
        || !expected
            .iter()
            .zip(store.iter())
            .all(|((an, at), (bn, bt))| an == bn && at.shape() == bt.shape())
    {
        return Err(Error::Checkpoint(format!(
            "{}: parameters do not match the configured architecture",
            path.display()
        ))
        .into());
    }
    Ok(())
}

pub fn run(args: Args) -> Result<()> {
    let task = Task::parse(&args.task)?;
    let cfg = parse_config(&args.config)?;
    let vocab = Vocabulary::load(&args.vocab)?;
    let cfg = cfg.with_vocab_size(vocab.size())?;

    if args.checkpoints.is_empty() || args.checkpoints.len() > 3 {
        return Err(Error::Decode("pass between 1 and 3 --checkpoint paths".into()).into());
    }
    let mut stores = Vec::new();
    for path in &args.checkpoints {
        let meta = path.with_extension("meta");
        if meta.exists() {
            check_meta_compatible(&meta, &cfg.model.manifest())?;
        }
        let store = ParameterStore::<F>::load(path)?.clone_frozen();
        check_structure(&cfg, &store, path)?;
        stores.push(store);
    }

    let manifest = Manifest::read(&args.manifest, &cfg.model.languages)?;
    let base = args.manifest.parent().unwrap_or(Path::new("."));
    let beam = args.beam.unwrap_or(cfg.decode.beam);
    if beam == 0 {
        return Err(Error::Decode("beam must be >= 1".into()).into());
    }

    let mut hyp_lines = Vec::with_capacity(manifest.rows.len());
    let mut hyp_texts = Vec::with_capacity(manifest.rows.len());
    let mut refs = Vec::with_capacity(manifest.rows.len());
    for row in &manifest.rows {
        let tgt_code = args.tgt_lang.as_deref().unwrap_or(&row.tgt_lang);
        let tgt_lang = cfg.model.languages.get(tgt_code)?;
        let src_lang = cfg.model.languages.get(&row.src_lang)?;

        // Per-model encoder states for this source.
        let mut scorers = Vec::new();
        let source_len = match task {
            Task::Nmt => vocab.encode(&row.src_text).len(),
            Task::Asr | Task::St => {
                let rel = row.audio_path.as_ref().ok_or_else(|| {
                    Error::Data(format!("row {}: speech task needs an audio path", row.id))
                })?;
                frontend_output_len(read_features::<F>(&base.join(rel))?.num_frames(), cfg.model.conv_blocks)
            }
        };
        for store in &stores {
            let model = Model::new(&cfg.model, store);
            let enc = match task {
                Task::Nmt => {
                    let ids = vocab.encode(&row.src_text);
                    model.encode_text(&ids, src_lang, &mut Forward::eval())?
                }
                Task::Asr | Task::St => {
                    let rel = row.audio_path.as_ref().expect("checked above");
                    let feats = read_features::<F>(&base.join(rel))?;
                    model.encode_speech(&feats, src_lang, &mut Forward::eval())?.0
                }
            };
            scorers.push(ModelScorer { model, enc, tgt_lang });
        }

        let max_len = if cfg.decode.max_len > 0 {
            cfg.decode.max_len
        } else {
            default_max_len(source_len)
        };
        let hyp = beam_search(
            &mut scorers,
            &DecodeConfig {
                beam,
                max_len,
                min_len: cfg.decode.min_len,
                length_penalty: cfg.decode.length_penalty,
                bos_id: BOS,
                eos_id: multist_core::text::EOS,
                banned_ids: vec![PAD, BOS, UNK, BLANK],
            },
        )?;
        let text = vocab.decode(&hyp.ids)?;
        hyp_lines.push(if args.scores {
            format!("{text}\t{:.6}", hyp.score)
        } else {
            text.clone()
        });
        hyp_texts.push(text);
        refs.push(row.tgt_text.clone());
    }

    let mut body = hyp_lines.join("\n");
    body.push('\n');
    fs::write(&args.out, body)?;
    println!("decoded {} rows -> {}", manifest.rows.len(), args.out.display());

    if let Some(report_path) = args.report {
        let metric = match task {
            Task::Asr => "wer",
            Task::Nmt | Task::St => "bleu",
        };
        let report = evaluate(metric, &hyp_texts, &refs)?;
        fs::write(&report_path, report.render_tsv())?;
        println!("{}", report.summary_line());
    }
    Ok(())
}
