//! Plain-text configuration files: `key = value` lines under `[model]`,
//! `[train]`, `[phase1..3]`, `[augment]` and `[decode]` sections. Unknown
//! sections or keys are errors, not warnings.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::audio::FeatureConfig;
use crate::augment::{SpecAugmentParams, TimeStretchParams};
use crate::losses::{LossWeights, Task};
use crate::model::ModelConfig;
use crate::text::LanguageSet;
use crate::{Error, Result};

/// Everything a run needs, parsed and validated.
#[derive(Debug, Clone)]
pub struct FullConfig {
    pub model: ModelConfig,
    pub features: FeatureConfig,
    pub train: TrainParams,
    pub phases: Vec<PhaseConfig>,
    pub spec_augment: SpecAugmentParams,
    pub time_stretch: TimeStretchParams,
    pub decode: DecodeParams,
}

#[derive(Debug, Clone)]
pub struct TrainParams {
    pub seed: u64,
    pub batch_size: usize,
    pub base_lr: f64,
    pub warmup: usize,
    pub label_smoothing: f64,
    pub ctc_weight: f64,
    pub clip_norm: f64,
    pub log_interval: usize,
    pub keep_checkpoints: usize,
    pub lr_reset_per_phase: bool,
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

/// One curriculum phase. Phase 1 pretrains on ASR+NMT, phase 2 mixes all
/// tasks with the 0.5/0.5/1.0 weighting, phase 3 fine-tunes ST (optionally
/// with knowledge distillation against the end-of-phase-1 model).
#[derive(Debug, Clone)]
pub struct PhaseConfig {
    pub phase: u8,
    pub steps: usize,
    pub tasks: Vec<Task>,
    pub weights: LossWeights,
    pub spec_augment: bool,
    pub time_stretch: bool,
    pub kd_enabled: bool,
    pub kd_weight: f64,
}

#[derive(Debug, Clone)]
pub struct DecodeParams {
    pub beam: usize,
    pub length_penalty: f64,
    /// 0 means the per-sample heuristic (2 + 2x source length).
    pub max_len: usize,
    pub min_len: usize,
}

impl FullConfig {
    /// Bind the model to a trained vocabulary: `[model] vocab_size` is the
    /// subword target/cap, the embedding table is sized by the actual
    /// vocabulary.
    pub fn with_vocab_size(&self, actual: usize) -> Result<FullConfig> {
        if actual > self.model.vocab_size {
            return Err(Error::Config(format!(
                "vocabulary has {actual} tokens, above the [model] vocab_size cap {}",
                self.model.vocab_size
            )));
        }
        let mut cfg = self.clone();
        cfg.model.vocab_size = actual;
        Ok(cfg)
    }
}

struct Section {
    name: String,
    entries: BTreeMap<String, (String, usize)>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(v, _)| v)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                Error::Config(format!("[{}] {key}: cannot parse value {v:?}", self.name))
            }),
        }
    }

    fn parse_bool(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.take(key).as_deref() {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => Err(Error::Config(format!(
                "[{}] {key}: expected true or false, found {v:?}",
                self.name
            ))),
        }
    }

    fn finish(self) -> Result<()> {
        if let Some((key, (_, line))) = self.entries.into_iter().next() {
            return Err(Error::Config(format!(
                "line {line}: unknown key '{key}' in section [{}]",
                self.name
            )));
        }
        Ok(())
    }
}

const KNOWN_SECTIONS: [&str; 7] =
    ["model", "train", "phase1", "phase2", "phase3", "augment", "decode"];

fn split_sections(text: &str) -> Result<BTreeMap<String, Section>> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            if !KNOWN_SECTIONS.contains(&name) {
                return Err(Error::Config(format!("line {lineno}: unknown section [{name}]")));
            }
            if sections.contains_key(name) {
                return Err(Error::Config(format!("line {lineno}: duplicate section [{name}]")));
            }
            sections.insert(
                name.to_string(),
                Section { name: name.to_string(), entries: BTreeMap::new() },
            );
            current = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {lineno}: expected key = value, found {line:?}")));
        };
        let Some(section) = current.as_ref() else {
            return Err(Error::Config(format!("line {lineno}: key outside any section")));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        let entries = &mut sections.get_mut(section).unwrap().entries;
        if entries.insert(key.clone(), (value, lineno)).is_some() {
            return Err(Error::Config(format!(
                "line {lineno}: duplicate key '{key}' in section [{section}]"
            )));
        }
    }
    Ok(sections)
}

fn parse_tasks(spec: &str) -> Result<Vec<Task>> {
    let mut tasks = Vec::new();
    for part in spec.split(',') {
        let t = Task::parse(part.trim())?;
        if tasks.contains(&t) {
            return Err(Error::Config(format!("duplicate task {part:?}")));
        }
        tasks.push(t);
    }
    Ok(tasks)
}

fn phase_defaults(phase: u8) -> (&'static str, bool, bool) {
    // (tasks, time_stretch default, kd default); SpecAugment defaults on in
    // every phase, Time Stretch only in the first two.
    match phase {
        1 => ("asr,nmt", true, false),
        2 => ("asr,nmt,st", true, false),
        _ => ("st", false, true),
    }
}

fn parse_phase(mut s: Section, phase: u8, ctc_weight: f64) -> Result<PhaseConfig> {
    let (task_default, stretch_default, kd_default) = phase_defaults(phase);
    let steps: usize = s.parse("steps", 0)?;
    if steps == 0 {
        return Err(Error::Config(format!("[phase{phase}] steps must be a positive count")));
    }
    let tasks = parse_tasks(&s.take("tasks").unwrap_or_else(|| task_default.to_string()))?;
    let weights = LossWeights {
        asr: s.parse("asr_weight", if phase == 2 { 0.5 } else { 1.0 })?,
        nmt: s.parse("nmt_weight", if phase == 2 { 0.5 } else { 1.0 })?,
        st: s.parse("st_weight", 1.0)?,
        ctc_weight,
    };
    let cfg = PhaseConfig {
        phase,
        steps,
        tasks,
        weights,
        spec_augment: s.parse_bool("spec_augment", true)?,
        time_stretch: s.parse_bool("time_stretch", stretch_default)?,
        kd_enabled: s.parse_bool("kd", kd_default)?,
        kd_weight: s.parse("kd_weight", 0.7)?,
    };
    s.finish()?;
    if cfg.phase == 1 && cfg.tasks.contains(&Task::St) {
        return Err(Error::Config("[phase1] tasks must be a subset of asr,nmt".into()));
    }
    if cfg.phase == 3 && cfg.tasks != [Task::St] {
        return Err(Error::Config("[phase3] tasks must be exactly st".into()));
    }
    if cfg.phase != 3 && cfg.kd_enabled {
        return Err(Error::Config(format!(
            "[phase{phase}] kd is only available in phase 3"
        )));
    }
    if !(0.0..=1.0).contains(&cfg.kd_weight) {
        return Err(Error::Config("[phase3] kd_weight must lie in [0, 1]".into()));
    }
    Ok(cfg)
}

/// Parse a config file.
pub fn parse_config(path: &Path) -> Result<FullConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

/// Parse config text (exposed for tests).
pub fn parse_config_str(text: &str) -> Result<FullConfig> {
    let mut sections = split_sections(text)?;

    let mut model_s = sections
        .remove("model")
        .ok_or_else(|| Error::Config("missing [model] section".into()))?;
    let languages = model_s
        .take("languages")
        .ok_or_else(|| Error::Config("[model] languages is required".into()))?;
    let languages = LanguageSet::new(&languages.split(',').map(str::trim).collect::<Vec<_>>())?;
    let model = ModelConfig {
        d_model: model_s.parse("d_model", 512)?,
        heads: model_s.parse("heads", 8)?,
        ffn: model_s.parse("ffn", 2048)?,
        enc_layers: model_s.parse("enc_layers", 6)?,
        dec_layers: model_s.parse("dec_layers", 6)?,
        conv_blocks: model_s.parse("conv_blocks", 3)?,
        convs_per_block: model_s.parse("convs_per_block", 3)?,
        transformer_per_block: model_s.parse("transformer_per_block", 2)?,
        dropout: model_s.parse("dropout", 0.1)?,
        vocab_size: model_s.parse("vocab_size", 10_000)?,
        n_mels: model_s.parse("n_mels", 80)?,
        languages,
    };
    let features = FeatureConfig {
        n_mels: model.n_mels,
        window_ms: model_s.parse("window_ms", 25)?,
        hop_ms: model_s.parse("hop_ms", 10)?,
        sample_rate: model_s.parse("sample_rate", 16_000)?,
    };
    model_s.finish()?;
    model.validate()?;

    let mut train_s = sections.remove("train").unwrap_or(Section {
        name: "train".into(),
        entries: BTreeMap::new(),
    });
    let train = TrainParams {
        seed: train_s.parse("seed", 0)?,
        batch_size: train_s.parse("batch_size", 8)?,
        base_lr: train_s.parse("base_lr", 1e-3)?,
        warmup: train_s.parse("warmup", 2000)?,
        label_smoothing: train_s.parse("label_smoothing", 0.1)?,
        ctc_weight: train_s.parse("ctc_weight", 0.3)?,
        clip_norm: train_s.parse("clip_norm", 1.0)?,
        log_interval: train_s.parse("log_interval", 10)?,
        keep_checkpoints: train_s.parse("keep_checkpoints", 12)?,
        lr_reset_per_phase: train_s.parse_bool("lr_reset_per_phase", false)?,
        data_dir: train_s.take("data_dir").map(PathBuf::from),
        out_dir: train_s.take("out_dir").map(PathBuf::from),
    };
    train_s.finish()?;
    if train.batch_size == 0 || train.warmup == 0 || train.log_interval == 0 {
        return Err(Error::Config(
            "[train] batch_size, warmup and log_interval must be positive".into(),
        ));
    }

    let mut phases = Vec::new();
    for phase in 1..=3u8 {
        if let Some(s) = sections.remove(&format!("phase{phase}")) {
            phases.push(parse_phase(s, phase, train.ctc_weight)?);
        }
    }
    if phases.is_empty() {
        return Err(Error::Config("at least [phase1] is required".into()));
    }
    if phases[0].phase != 1 {
        return Err(Error::Config("curriculum must start with [phase1]".into()));
    }
    if phases.iter().any(|p| p.phase == 3 && p.kd_enabled) && phases.len() == 1 {
        return Err(Error::Config(
            "knowledge distillation needs a phase-1 teacher; add [phase1]".into(),
        ));
    }

    let mut aug_s = sections.remove("augment").unwrap_or(Section {
        name: "augment".into(),
        entries: BTreeMap::new(),
    });
    let spec_augment = SpecAugmentParams {
        time_mask: aug_s.parse("time_mask", 40)?,
        freq_mask: aug_s.parse("freq_mask", 4)?,
        num_time_masks: aug_s.parse("num_time_masks", 2)?,
        num_freq_masks: aug_s.parse("num_freq_masks", 1)?,
    };
    let window = match aug_s.take("stretch_window").as_deref() {
        None | Some("inf") => None,
        Some(v) => Some(v.parse().map_err(|_| {
            Error::Config(format!("[augment] stretch_window: expected 'inf' or a count, found {v:?}"))
        })?),
    };
    let time_stretch = TimeStretchParams {
        window,
        low: aug_s.parse("stretch_low", 0.8)?,
        high: aug_s.parse("stretch_high", 1.25)?,
    };
    aug_s.finish()?;
    if !(time_stretch.low > 0.0 && time_stretch.low <= time_stretch.high) {
        return Err(Error::Config(
            "[augment] stretch factors must satisfy 0 < low <= high".into(),
        ));
    }

    let mut dec_s = sections.remove("decode").unwrap_or(Section {
        name: "decode".into(),
        entries: BTreeMap::new(),
    });
    let decode = DecodeParams {
        beam: dec_s.parse("beam", 5)?,
        length_penalty: dec_s.parse("length_penalty", 1.0)?,
        max_len: dec_s.parse("max_len", 0)?,
        min_len: dec_s.parse("min_len", 1)?,
    };
    dec_s.finish()?;
    if decode.beam == 0 {
        return Err(Error::Config("[decode] beam must be >= 1".into()));
    }

    Ok(FullConfig {
        model,
        features,
        train,
        phases,
        spec_augment,
        time_stretch,
        decode,
    })
}
