//! Data preparation: raw WAVs + aligned text files in, feature files,
//! per-task train/dev manifests and the joint subword vocabulary out.
//!
//! Raw layout, one directory per source language:
//!   `<lang>/wav/<id>.wav`
//!   `<lang>/transcripts.tsv`          id <TAB> text
//!   `<lang>/translations.<tgt>.tsv`   id <TAB> text   (makes ST triples)
//!   `nmt/<src>-<tgt>.tsv`             id <TAB> src <TAB> tgt

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use crate::audio::{cmvn, log_mel, read_wav, write_features};
use crate::config::FullConfig;
use crate::data::{Manifest, ManifestRow};
use crate::text::Vocabulary;
use crate::{Error, Result};

#[derive(Debug, Default)]
pub struct PrepareSummary {
    pub utterances: usize,
    pub vocab_size: usize,
    pub rows: Vec<(String, usize, usize)>, // (task, train rows, dev rows)
}

struct Utterance {
    lang: String,
    transcript: String,
    translations: BTreeMap<String, String>,
    n_frames: usize,
}

fn read_tsv(path: &Path, fields: usize) -> Result<Vec<Vec<String>>> {
    let body = fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (idx, line) in body.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<String> = line.split('\t').map(str::to_string).collect();
        if parts.len() != fields || parts.iter().any(|p| p.is_empty()) {
            return Err(Error::Data(format!(
                "{}: line {}: expected {fields} non-empty tab-separated fields",
                path.display(),
                idx + 1
            )));
        }
        rows.push(parts);
    }
    Ok(rows)
}

/// Run the preparation pipeline. `dev_every` sends every k-th row of each
/// manifest to the dev split (0 disables the split).
pub fn prepare_data(
    raw: &Path,
    out: &Path,
    cfg: &FullConfig,
    dev_every: usize,
) -> Result<PrepareSummary> {
    let langs = &cfg.model.languages;
    fs::create_dir_all(out.join("features"))?;

    let mut utterances: BTreeMap<String, Utterance> = BTreeMap::new();
    let mut corpus: Vec<String> = Vec::new();

    for (_, lang) in langs.iter() {
        let lang_dir = raw.join(lang);
        let transcripts = lang_dir.join("transcripts.tsv");
        if !transcripts.exists() {
            continue;
        }
        for row in read_tsv(&transcripts, 2)? {
            let (id, text) = (&row[0], &row[1]);
            if utterances.contains_key(id) {
                return Err(Error::Data(format!(
                    "{}: duplicate utterance id {id:?}",
                    transcripts.display()
                )));
            }
            let wav_path = lang_dir.join("wav").join(format!("{id}.wav"));
            let wave = read_wav::<f64>(&wav_path)?;
            let feats = cmvn(&log_mel(&wave, &cfg.features)?);
            write_features(&out.join("features").join(format!("{id}.feat")), &feats)?;
            corpus.push(text.clone());
            utterances.insert(
                id.clone(),
                Utterance {
                    lang: lang.to_string(),
                    transcript: text.clone(),
                    translations: BTreeMap::new(),
                    n_frames: feats.num_frames(),
                },
            );
        }

        // translations.<tgt>.tsv files, in deterministic name order.
        let mut entries: Vec<PathBuf> = fs::read_dir(&lang_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for path in entries {
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            let Some(tgt) = name
                .strip_prefix("translations.")
                .and_then(|s| s.strip_suffix(".tsv"))
            else {
                continue;
            };
            langs.get(tgt).map_err(|_| {
                Error::Data(format!("{}: unregistered language '{tgt}'", path.display()))
            })?;
            for (lineno, row) in read_tsv(&path, 2)?.into_iter().enumerate() {
                let (id, text) = (&row[0], &row[1]);
                let utt = utterances.get_mut(id).ok_or_else(|| {
                    Error::Data(format!(
                        "{}: line {}: unknown utterance id {id:?}",
                        path.display(),
                        lineno + 1
                    ))
                })?;
                if utt.lang != *lang {
                    return Err(Error::Data(format!(
                        "{}: line {}: utterance {id:?} belongs to language {}",
                        path.display(),
                        lineno + 1,
                        utt.lang
                    )));
                }
                utt.translations.insert(tgt.to_string(), text.clone());
                corpus.push(text.clone());
            }
        }
    }

    // Pure text pairs.
    let mut nmt_rows: Vec<ManifestRow> = Vec::new();
    let nmt_dir = raw.join("nmt");
    if nmt_dir.exists() {
        let mut files: Vec<PathBuf> = fs::read_dir(&nmt_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        files.sort();
        let mut seen = HashSet::new();
        for path in files {
            let Some(stem) = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_suffix(".tsv"))
            else {
                continue;
            };
            let Some((src, tgt)) = stem.split_once('-') else {
                return Err(Error::Data(format!(
                    "{}: expected <src>-<tgt>.tsv naming",
                    path.display()
                )));
            };
            for lang in [src, tgt] {
                langs.get(lang).map_err(|_| {
                    Error::Data(format!("{}: unregistered language '{lang}'", path.display()))
                })?;
            }
            for (lineno, row) in read_tsv(&path, 3)?.into_iter().enumerate() {
                if !seen.insert(row[0].clone()) {
                    return Err(Error::Data(format!(
                        "{}: line {}: duplicate id {:?}",
                        path.display(),
                        lineno + 1,
                        row[0]
                    )));
                }
                corpus.push(row[1].clone());
                corpus.push(row[2].clone());
                nmt_rows.push(ManifestRow {
                    id: row[0].clone(),
                    audio_path: None,
                    n_frames: 0,
                    src_lang: src.to_string(),
                    tgt_lang: tgt.to_string(),
                    src_text: row[1].clone(),
                    tgt_text: row[2].clone(),
                });
            }
        }
    }

    if utterances.is_empty() && nmt_rows.is_empty() {
        return Err(Error::Data(format!(
            "{}: no transcripts.tsv or nmt data found for the registered languages",
            raw.display()
        )));
    }

    let vocab = Vocabulary::train_bpe(&corpus, cfg.model.vocab_size)?;
    vocab.save(&out.join("vocab.txt"))?;

    let mut st_rows: Vec<ManifestRow> = Vec::new();
    let mut asr_rows: Vec<ManifestRow> = Vec::new();
    for (id, utt) in &utterances {
        let audio = Some(PathBuf::from(format!("features/{id}.feat")));
        if utt.translations.is_empty() {
            asr_rows.push(ManifestRow {
                id: id.clone(),
                audio_path: audio,
                n_frames: utt.n_frames,
                src_lang: utt.lang.clone(),
                tgt_lang: utt.lang.clone(),
                src_text: utt.transcript.clone(),
                tgt_text: utt.transcript.clone(),
            });
        } else {
            for (tgt, text) in &utt.translations {
                let row_id = if utt.translations.len() == 1 {
                    id.clone()
                } else {
                    format!("{id}@{tgt}")
                };
                st_rows.push(ManifestRow {
                    id: row_id,
                    audio_path: audio.clone(),
                    n_frames: utt.n_frames,
                    src_lang: utt.lang.clone(),
                    tgt_lang: tgt.clone(),
                    src_text: utt.transcript.clone(),
                    tgt_text: text.clone(),
                });
            }
        }
    }

    let mut summary = PrepareSummary {
        utterances: utterances.len(),
        vocab_size: vocab.size(),
        rows: Vec::new(),
    };
    for (task, rows) in [("st", st_rows), ("asr", asr_rows), ("nmt", nmt_rows)] {
        if rows.is_empty() {
            continue;
        }
        let (mut train, mut dev) = (Vec::new(), Vec::new());
        for (i, row) in rows.into_iter().enumerate() {
            if dev_every > 0 && (i + 1) % dev_every == 0 {
                dev.push(row);
            } else {
                train.push(row);
            }
        }
        summary.rows.push((task.to_string(), train.len(), dev.len()));
        Manifest { rows: train }.write(&out.join(format!("train_{task}.tsv")))?;
        if !dev.is_empty() {
            Manifest { rows: dev }.write(&out.join(format!("dev_{task}.tsv")))?;
        }
        // Re-read through the validating parser so every written row obeys
        // the manifest contract.
        Manifest::read(&out.join(format!("train_{task}.tsv")), langs)?;
    }
    Ok(summary)
}
