//! Datasets: manifest files, per-task records, and the task-view expansion
//! that turns ST triples into ASR and NMT training pairs as well.

use std::fs;
use std::path::{Path, PathBuf};

use crate::audio::{read_features, FeatureMatrix};
use crate::losses::Task;
use crate::scalar::Scalar;
use crate::text::{LanguageId, LanguageSet, Vocabulary};
use crate::{Error, Result};

pub const MANIFEST_HEADER: &str = "id\taudio_path\tn_frames\tsrc_lang\ttgt_lang\tsrc_text\ttgt_text";

/// One manifest row. `audio_path` is `None` for text-only rows (written as
/// "-"); paths are relative to the manifest's directory.
#[derive(Debug, Clone)]
pub struct ManifestRow {
    pub id: String,
    pub audio_path: Option<PathBuf>,
    pub n_frames: usize,
    pub src_lang: String,
    pub tgt_lang: String,
    pub src_text: String,
    pub tgt_text: String,
}

#[derive(Debug, Clone, Default)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    /// Parse and validate a manifest: exact header, 7 tab-separated fields,
    /// unique ids, registered languages. Errors name the offending line.
    pub fn read(path: &Path, langs: &LanguageSet) -> Result<Manifest> {
        let body = fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
        let mut lines = body.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h == MANIFEST_HEADER => {}
            _ => {
                return Err(Error::Data(format!(
                    "{}: line 1: expected header {MANIFEST_HEADER:?}",
                    path.display()
                )))
            }
        }
        let mut rows = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 7 {
                return Err(Error::Data(format!(
                    "{}: line {lineno}: expected 7 tab-separated fields, found {}",
                    path.display(),
                    fields.len()
                )));
            }
            let id = fields[0].to_string();
            if id.is_empty() {
                return Err(Error::Data(format!(
                    "{}: line {lineno}: empty id",
                    path.display()
                )));
            }
            if !seen.insert(id.clone()) {
                return Err(Error::Data(format!(
                    "{}: line {lineno}: duplicate id {id:?}",
                    path.display()
                )));
            }
            let n_frames: usize = fields[2].parse().map_err(|_| {
                Error::Data(format!(
                    "{}: line {lineno}: bad n_frames {:?}",
                    path.display(),
                    fields[2]
                ))
            })?;
            for lang in [fields[3], fields[4]] {
                langs.get(lang).map_err(|_| {
                    Error::Data(format!(
                        "{}: line {lineno} (id {id}): unregistered language '{lang}'",
                        path.display()
                    ))
                })?;
            }
            rows.push(ManifestRow {
                id,
                audio_path: match fields[1] {
                    "-" => None,
                    p => Some(PathBuf::from(p)),
                },
                n_frames,
                src_lang: fields[3].to_string(),
                tgt_lang: fields[4].to_string(),
                src_text: fields[5].to_string(),
                tgt_text: fields[6].to_string(),
            });
        }
        Ok(Manifest { rows })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::from(MANIFEST_HEADER);
        out.push('\n');
        for r in &self.rows {
            let audio = r
                .audio_path
                .as_ref()
                .map(|p| p.to_string_lossy().into_owned())
                .unwrap_or_else(|| "-".to_string());
            for text in [&r.src_text, &r.tgt_text] {
                if text.contains('\t') || text.contains('\n') {
                    return Err(Error::Data(format!(
                        "row {}: text fields must not contain tabs or newlines",
                        r.id
                    )));
                }
            }
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.id, audio, r.n_frames, r.src_lang, r.tgt_lang, r.src_text, r.tgt_text
            ));
        }
        fs::write(path, out)?;
        Ok(())
    }
}

/// ST triple: speech, transcript (source language) and translation.
pub struct StRecord<F: Scalar> {
    pub id: String,
    pub features: FeatureMatrix<F>,
    pub src_lang: LanguageId,
    pub tgt_lang: LanguageId,
    pub transcript_ids: Vec<usize>,
    pub translation_ids: Vec<usize>,
}

/// ASR pair: speech and transcript.
pub struct AsrRecord<F: Scalar> {
    pub id: String,
    pub features: FeatureMatrix<F>,
    pub lang: LanguageId,
    pub transcript_ids: Vec<usize>,
}

/// NMT pair: source and target text.
pub struct NmtRecord {
    pub id: String,
    pub src_lang: LanguageId,
    pub tgt_lang: LanguageId,
    pub src_ids: Vec<usize>,
    pub tgt_ids: Vec<usize>,
}

/// One training item. For ASR, source and target language coincide and the
/// target is the transcript; speech tasks carry transcript ids for CTC.
pub struct Sample<F: Scalar> {
    pub id: String,
    pub task: Task,
    pub src_lang: LanguageId,
    pub tgt_lang: LanguageId,
    pub speech: Option<FeatureMatrix<F>>,
    pub src_ids: Option<Vec<usize>>,
    pub tgt_ids: Vec<usize>,
    pub transcript_ids: Option<Vec<usize>>,
}

/// Expand the available data into per-task training views: every ST triple
/// contributes an ST, an ASR and an NMT sample; pure pairs contribute one
/// sample each. Sample ids record provenance.
pub fn build_task_views<F: Scalar>(
    st_data: Vec<StRecord<F>>,
    asr_data: Vec<AsrRecord<F>>,
    nmt_data: Vec<NmtRecord>,
) -> Result<Vec<Sample<F>>> {
    let mut out = Vec::with_capacity(st_data.len() * 3 + asr_data.len() + nmt_data.len());
    for st in st_data {
        if st.transcript_ids.is_empty() {
            return Err(Error::Data(format!("ST record {} is missing a transcript", st.id)));
        }
        out.push(Sample {
            id: format!("{}#st", st.id),
            task: Task::St,
            src_lang: st.src_lang,
            tgt_lang: st.tgt_lang,
            speech: Some(st.features.clone()),
            src_ids: None,
            tgt_ids: st.translation_ids.clone(),
            transcript_ids: Some(st.transcript_ids.clone()),
        });
        out.push(Sample {
            id: format!("{}#st>asr", st.id),
            task: Task::Asr,
            src_lang: st.src_lang,
            tgt_lang: st.src_lang,
            speech: Some(st.features),
            src_ids: None,
            tgt_ids: st.transcript_ids.clone(),
            transcript_ids: Some(st.transcript_ids.clone()),
        });
        out.push(Sample {
            id: format!("{}#st>nmt", st.id),
            task: Task::Nmt,
            src_lang: st.src_lang,
            tgt_lang: st.tgt_lang,
            speech: None,
            src_ids: Some(st.transcript_ids),
            tgt_ids: st.translation_ids,
            transcript_ids: None,
        });
    }
    for asr in asr_data {
        out.push(Sample {
            id: format!("{}#asr", asr.id),
            task: Task::Asr,
            src_lang: asr.lang,
            tgt_lang: asr.lang,
            speech: Some(asr.features),
            src_ids: None,
            tgt_ids: asr.transcript_ids.clone(),
            transcript_ids: Some(asr.transcript_ids),
        });
    }
    for nmt in nmt_data {
        out.push(Sample {
            id: format!("{}#nmt", nmt.id),
            task: Task::Nmt,
            src_lang: nmt.src_lang,
            tgt_lang: nmt.tgt_lang,
            speech: None,
            src_ids: Some(nmt.src_ids),
            tgt_ids: nmt.tgt_ids,
            transcript_ids: None,
        });
    }
    Ok(out)
}

fn load_row_features<F: Scalar>(
    row: &ManifestRow,
    base: &Path,
    manifest: &Path,
) -> Result<FeatureMatrix<F>> {
    let rel = row.audio_path.as_ref().ok_or_else(|| {
        Error::Data(format!(
            "{}: row {}: speech task row without an audio path",
            manifest.display(),
            row.id
        ))
    })?;
    let feats = read_features::<F>(&base.join(rel))?;
    if feats.num_frames() != row.n_frames {
        return Err(Error::Data(format!(
            "{}: row {}: n_frames {} does not match feature file ({} frames)",
            manifest.display(),
            row.id,
            row.n_frames,
            feats.num_frames()
        )));
    }
    Ok(feats)
}

/// Load the train or dev split of a prepared data directory into task views.
/// Missing per-task manifests simply contribute no data.
pub fn load_split<F: Scalar>(
    data_dir: &Path,
    split: &str,
    vocab: &Vocabulary,
    langs: &LanguageSet,
) -> Result<Vec<Sample<F>>> {
    let mut st = Vec::new();
    let mut asr = Vec::new();
    let mut nmt = Vec::new();

    let st_path = data_dir.join(format!("{split}_st.tsv"));
    if st_path.exists() {
        for row in Manifest::read(&st_path, langs)?.rows {
            if row.src_text.is_empty() {
                return Err(Error::Data(format!(
                    "{}: row {}: ST rows need a transcript in src_text",
                    st_path.display(),
                    row.id
                )));
            }
            st.push(StRecord {
                features: load_row_features(&row, data_dir, &st_path)?,
                src_lang: langs.get(&row.src_lang)?,
                tgt_lang: langs.get(&row.tgt_lang)?,
                transcript_ids: vocab.encode(&row.src_text),
                translation_ids: vocab.encode(&row.tgt_text),
                id: row.id,
            });
        }
    }
    let asr_path = data_dir.join(format!("{split}_asr.tsv"));
    if asr_path.exists() {
        for row in Manifest::read(&asr_path, langs)?.rows {
            if row.src_lang != row.tgt_lang {
                return Err(Error::Data(format!(
                    "{}: row {}: ASR rows need src_lang == tgt_lang",
                    asr_path.display(),
                    row.id
                )));
            }
            asr.push(AsrRecord {
                features: load_row_features(&row, data_dir, &asr_path)?,
                lang: langs.get(&row.src_lang)?,
                transcript_ids: vocab.encode(&row.tgt_text),
                id: row.id,
            });
        }
    }
    let nmt_path = data_dir.join(format!("{split}_nmt.tsv"));
    if nmt_path.exists() {
        for row in Manifest::read(&nmt_path, langs)?.rows {
            nmt.push(NmtRecord {
                src_lang: langs.get(&row.src_lang)?,
                tgt_lang: langs.get(&row.tgt_lang)?,
                src_ids: vocab.encode(&row.src_text),
                tgt_ids: vocab.encode(&row.tgt_text),
                id: row.id,
            });
        }
    }
    build_task_views(st, asr, nmt)
}
