//! Three-phase curriculum training: Adam with inverse-square-root warmup,
//! homogeneous per-task batches sampled proportionally to dataset sizes,
//! auxiliary CTC on speech tasks, knowledge distillation in the fine-tuning
//! phase, per-epoch checkpointing and deterministic resume.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rand::seq::SliceRandom;

use crate::augment::{spec_augment, time_stretch};
use crate::config::{FullConfig, PhaseConfig};
use crate::data::{load_split, Sample};
use crate::losses::{cross_entropy, ctc_feasible, ctc_loss, kd_loss, KdConfig, Task};
use crate::model::{frontend_output_len, Forward, Model, MIN_SPEECH_FRAMES};
use crate::params::ParameterStore;
use crate::rng::{self, fnv1a, tag};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::text::{BLANK, BOS, EOS, PAD};
use crate::{Error, Result};

/// Inverse-square-root schedule with linear warmup:
/// `base_lr * min(step/warmup, sqrt(warmup/step))`, peaking at `base_lr`
/// when `step == warmup`.
pub fn lr_inverse_sqrt(step: usize, base_lr: f64, warmup: usize) -> f64 {
    assert!(step >= 1, "schedule steps are 1-based");
    assert!(warmup >= 1);
    let s = step as f64;
    let w = warmup as f64;
    base_lr * (s / w).min((w / s).sqrt())
}

/// Phase whose half-open cumulative interval `[start, end)` contains
/// `global_step`; stepping beyond the total budget is an error.
pub fn curriculum_phase(global_step: usize, phases: &[PhaseConfig]) -> Result<&PhaseConfig> {
    let mut start = 0;
    for p in phases {
        let end = start + p.steps;
        if global_step < end {
            return Ok(p);
        }
        start = end;
    }
    Err(Error::Train(format!(
        "step {global_step} is beyond the total budget of {start} steps"
    )))
}

/// Adam accumulators (beta1 0.9, beta2 0.98, eps 1e-8) plus the step count.
pub struct OptimizerState<F: Scalar> {
    pub step: usize,
    moments: IndexMap<String, (Vec<F>, Vec<F>)>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.98;
const ADAM_EPS: f64 = 1e-8;

impl<F: Scalar> OptimizerState<F> {
    pub fn new(store: &ParameterStore<F>) -> Self {
        let moments = store
            .iter()
            .map(|(name, t)| {
                (name.to_string(), (vec![F::zero(); t.numel()], vec![F::zero(); t.numel()]))
            })
            .collect();
        OptimizerState { step: 0, moments }
    }

    /// Serialize into the checkpoint container ("step", "m.*", "v.*").
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut s = ParameterStore::<F>::new();
        s.insert("step", Tensor::param(vec![1], vec![F::from_f64(self.step as f64)]));
        for (name, (m, v)) in &self.moments {
            s.insert(&format!("m.{name}"), Tensor::param(vec![m.len()], m.clone()));
            s.insert(&format!("v.{name}"), Tensor::param(vec![v.len()], v.clone()));
        }
        s.save(path)
    }

    pub fn load(path: &Path, store: &ParameterStore<F>) -> Result<Self> {
        let s = ParameterStore::<F>::load(path)?;
        let step = s
            .try_get("step")
            .ok_or_else(|| Error::Checkpoint("optimizer state missing step".into()))?
            .item()
            .to_f64_lossy() as usize;
        let mut moments = IndexMap::new();
        for (name, t) in store.iter() {
            let m = s
                .try_get(&format!("m.{name}"))
                .ok_or_else(|| Error::Checkpoint(format!("optimizer state missing m.{name}")))?;
            let v = s
                .try_get(&format!("v.{name}"))
                .ok_or_else(|| Error::Checkpoint(format!("optimizer state missing v.{name}")))?;
            if m.numel() != t.numel() || v.numel() != t.numel() {
                return Err(Error::Checkpoint(format!(
                    "optimizer moments for {name} do not match the parameter shape"
                )));
            }
            moments.insert(name.to_string(), (m.data().to_vec(), v.data().to_vec()));
        }
        Ok(OptimizerState { step, moments })
    }
}

/// One bias-corrected Adam update. Gradients must be finite and aligned
/// with the store; parameters are replaced with fresh leaves.
pub fn adam_step<F: Scalar>(
    store: &mut ParameterStore<F>,
    grads: &IndexMap<String, Vec<F>>,
    state: &mut OptimizerState<F>,
    lr: f64,
) {
    state.step += 1;
    let t = state.step as i32;
    let b1 = F::from_f64(BETA1);
    let b2 = F::from_f64(BETA2);
    let one = F::one();
    let bc1 = F::from_f64(1.0 - BETA1.powi(t));
    let bc2 = F::from_f64(1.0 - BETA2.powi(t));
    let eps = F::from_f64(ADAM_EPS);
    let lr_f = F::from_f64(lr);

    let names: Vec<String> = store.names().map(|s| s.to_string()).collect();
    let zero = Vec::new();
    for name in names {
        let g = grads.get(&name).unwrap_or(&zero);
        let (m, v) = state.moments.get_mut(&name).expect("moments follow the store");
        let old = store.get(&name);
        let mut data = old.data().to_vec();
        for i in 0..data.len() {
            let gi = g.get(i).copied().unwrap_or(F::zero());
            m[i] = b1 * m[i] + (one - b1) * gi;
            v[i] = b2 * v[i] + (one - b2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            data[i] = data[i] - lr_f * m_hat / (v_hat.sqrt() + eps);
        }
        let shape = old.shape().to_vec();
        store.set(&name, Tensor::param(shape, data));
    }
}

/// Per-step training record (both the raw task loss and the weighted value
/// that was backpropagated, so the multi-task weighting is inspectable).
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub phase: u8,
    pub task: Task,
    pub raw_loss: f64,
    pub weighted_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Default)]
pub struct TrainReport {
    pub records: Vec<StepRecord>,
    pub skipped_infeasible_ctc: usize,
    pub skipped_non_finite_grad: usize,
    pub final_checkpoint: PathBuf,
    pub log_path: PathBuf,
}

pub struct TrainOptions {
    pub resume: bool,
    /// Stop after this many completed steps without saving (simulates an
    /// interruption; resume redoes the partial epoch deterministically).
    pub max_steps: Option<usize>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { resume: false, max_steps: None }
    }
}

pub fn train<F: Scalar>(cfg: &FullConfig) -> Result<TrainReport> {
    train_with_options::<F>(cfg, &TrainOptions::default())
}

struct BatchOutcome<F: Scalar> {
    grads: IndexMap<String, Vec<F>>,
    raw_loss_sum: f64,
    contributing: usize,
    infeasible: usize,
    non_finite: usize,
}

fn checkpoint_name(step: usize) -> String {
    format!("ckpt_s{step:08}.ckpt")
}

/// Step checkpoints in a directory, sorted by step.
pub fn list_step_checkpoints(dir: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(step) = name
            .strip_prefix("ckpt_s")
            .and_then(|s| s.strip_suffix(".ckpt"))
            .and_then(|s| s.parse::<usize>().ok())
        {
            out.push((step, path));
        }
    }
    out.sort();
    Ok(out)
}

/// Read a sidecar meta file and check its architecture lines against `cfg`.
pub fn check_meta_compatible(meta_path: &Path, arch_manifest: &str) -> Result<BTreeMap<String, String>> {
    let body = fs::read_to_string(meta_path)
        .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", meta_path.display())))?;
    let mut extra = BTreeMap::new();
    let mut arch_lines = Vec::new();
    for line in body.lines() {
        if let Some(rest) = line.strip_prefix("train.") {
            if let Some((k, v)) = rest.split_once('=') {
                extra.insert(k.to_string(), v.to_string());
            }
        } else if !line.is_empty() {
            arch_lines.push(line);
        }
    }
    let expected: Vec<&str> = arch_manifest.lines().collect();
    if arch_lines != expected {
        return Err(Error::Checkpoint(format!(
            "{}: architecture does not match this configuration",
            meta_path.display()
        )));
    }
    Ok(extra)
}

struct Trainer<'c, F: Scalar> {
    cfg: &'c FullConfig,
    out_dir: PathBuf,
    samples: Vec<Sample<F>>,
    pools: BTreeMap<Task, Vec<usize>>,
    store: ParameterStore<F>,
    opt: OptimizerState<F>,
    teacher: Option<ParameterStore<F>>,
    epochs: BTreeMap<u8, usize>,
    completed: usize,
    log_lines: Vec<String>,
    report: TrainReport,
}

pub fn train_with_options<F: Scalar>(cfg: &FullConfig, opts: &TrainOptions) -> Result<TrainReport> {
    let data_dir = cfg
        .train
        .data_dir
        .as_ref()
        .ok_or_else(|| Error::Config("[train] data_dir is required to train".into()))?;
    let out_dir = cfg
        .train
        .out_dir
        .as_ref()
        .ok_or_else(|| Error::Config("[train] out_dir is required to train".into()))?
        .clone();
    fs::create_dir_all(&out_dir)?;

    let vocab = crate::text::Vocabulary::load(&data_dir.join("vocab.txt"))?;
    let cfg = cfg.with_vocab_size(vocab.size())?;
    let cfg = &cfg;
    let samples = load_split::<F>(data_dir, "train", &vocab, &cfg.model.languages)?;

    let mut pools: BTreeMap<Task, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        pools.entry(s.task).or_default().push(i);
    }
    // Every configured task must actually have data, before any training step.
    for phase in &cfg.phases {
        for task in &phase.tasks {
            if !pools.contains_key(task) {
                return Err(Error::Data(format!(
                    "phase {} requires task {} but the dataset has no {} samples",
                    phase.phase,
                    task.name(),
                    task.name()
                )));
            }
        }
    }

    let mut trainer = Trainer {
        cfg,
        out_dir,
        samples,
        pools,
        store: crate::model::init_params(&cfg.model, cfg.train.seed),
        opt: OptimizerState::new(&ParameterStore::<F>::new()),
        teacher: None,
        epochs: BTreeMap::new(),
        completed: 0,
        log_lines: vec!["# multist training log".to_string()],
        report: TrainReport::default(),
    };
    trainer.opt = OptimizerState::new(&trainer.store);

    if opts.resume {
        trainer.resume()?;
    }
    trainer.run(opts.max_steps)?;
    Ok(trainer.report)
}

impl<'c, F: Scalar> Trainer<'c, F> {
    fn meta_text(&self) -> String {
        let mut out = self.cfg.model.manifest();
        out.push_str(&format!("train.step={}\n", self.completed));
        for p in &self.cfg.phases {
            out.push_str(&format!(
                "train.epoch_p{}={}\n",
                p.phase,
                self.epochs.get(&p.phase).copied().unwrap_or(0)
            ));
        }
        out
    }

    fn save_checkpoint(&mut self) -> Result<PathBuf> {
        let name = checkpoint_name(self.completed);
        let path = self.out_dir.join(&name);
        self.store.save(&path)?;
        self.opt.save(&path.with_extension("opt"))?;
        fs::write(path.with_extension("meta"), self.meta_text())?;
        self.flush_log()?;
        self.prune_checkpoints()?;
        Ok(path)
    }

    fn prune_checkpoints(&self) -> Result<()> {
        let keep = self.cfg.train.keep_checkpoints.max(1);
        let all = list_step_checkpoints(&self.out_dir)?;
        if all.len() > keep {
            for (_, path) in &all[..all.len() - keep] {
                let _ = fs::remove_file(path);
                let _ = fs::remove_file(path.with_extension("opt"));
                let _ = fs::remove_file(path.with_extension("meta"));
            }
        }
        Ok(())
    }

    fn flush_log(&self) -> Result<()> {
        let mut body = self.log_lines.join("\n");
        body.push('\n');
        fs::write(self.out_dir.join("train.log"), body)?;
        Ok(())
    }

    fn resume(&mut self) -> Result<()> {
        let ckpts = list_step_checkpoints(&self.out_dir)?;
        let Some((step, path)) = ckpts.last().cloned() else {
            return Ok(()); // nothing saved yet; start fresh
        };
        let extra = check_meta_compatible(&path.with_extension("meta"), &self.cfg.model.manifest())?;
        self.store = ParameterStore::load(&path)?;
        self.opt = OptimizerState::load(&path.with_extension("opt"), &self.store)?;
        self.completed = step;
        for p in &self.cfg.phases {
            if let Some(e) = extra.get(&format!("epoch_p{}", p.phase)) {
                self.epochs.insert(
                    p.phase,
                    e.parse().map_err(|_| Error::Checkpoint("bad epoch counter in meta".into()))?,
                );
            }
        }
        // Reload the KD teacher if fine-tuning lies ahead of (or at) the
        // resume point.
        let phase1_end: usize = self.cfg.phases.first().map(|p| p.steps).unwrap_or(0);
        let needs_teacher = self.cfg.phases.iter().any(|p| p.kd_enabled);
        if needs_teacher && self.completed >= phase1_end {
            let tpath = self.out_dir.join("phase1_final.ckpt");
            self.teacher = Some(ParameterStore::load(&tpath)?.clone_frozen());
        }
        // Drop log lines from the abandoned partial epoch.
        let existing = self.out_dir.join("train.log");
        if existing.exists() {
            let body = fs::read_to_string(&existing)?;
            let mut kept = Vec::new();
            for line in body.lines() {
                if line.starts_with('#') {
                    kept.push(line.to_string());
                    continue;
                }
                let step_field: usize = line
                    .split('\t')
                    .next()
                    .and_then(|s| s.parse().ok())
                    .unwrap_or(usize::MAX);
                if step_field <= self.completed {
                    kept.push(line.to_string());
                }
            }
            // Remove trailing comments that belong to dropped lines.
            while kept.last().map(|l| l.starts_with("# phase")).unwrap_or(false) {
                kept.pop();
            }
            self.log_lines = kept;
        }
        Ok(())
    }

    /// Batches for one epoch of a phase: per task, a seeded shuffle chunked
    /// into batches, then a seeded shuffle of the pooled batch order. Tasks
    /// therefore appear proportionally to their dataset sizes and every
    /// active task with data appears at least once per epoch.
    fn epoch_plan(&self, phase: &PhaseConfig, epoch: usize) -> Vec<(Task, Vec<usize>)> {
        let seed = self.cfg.train.seed;
        let bs = self.cfg.train.batch_size;
        let mut batches: Vec<(Task, Vec<usize>)> = Vec::new();
        for (ti, task) in phase.tasks.iter().enumerate() {
            let mut idx = self.pools.get(task).cloned().unwrap_or_default();
            let mut r = rng::stream(
                seed,
                &[tag::SHUFFLE, phase.phase as u64, epoch as u64, ti as u64],
            );
            idx.shuffle(&mut r);
            for chunk in idx.chunks(bs) {
                batches.push((*task, chunk.to_vec()));
            }
        }
        let mut r = rng::stream(
            seed,
            &[tag::SHUFFLE, phase.phase as u64, epoch as u64, u64::MAX],
        );
        batches.shuffle(&mut r);
        batches
    }

    /// Loss graph for one sample. `Ok(None)` marks an infeasible-CTC skip.
    fn sample_loss(
        &self,
        sample: &Sample<F>,
        phase: &PhaseConfig,
        epoch: usize,
        batch_pos: usize,
    ) -> Result<Option<Tensor<F>>> {
        let model = Model::new(&self.cfg.model, &self.store);
        let mut drop_rng = rng::stream(
            self.cfg.train.seed,
            &[tag::DROPOUT, self.completed as u64, batch_pos as u64],
        );

        let dec_input: Vec<usize> = std::iter::once(BOS).chain(sample.tgt_ids.iter().copied()).collect();
        let dec_target: Vec<usize> =
            sample.tgt_ids.iter().copied().chain(std::iter::once(EOS)).collect();
        let smoothing = self.cfg.train.label_smoothing;
        let ctc_w = self.cfg.train.ctc_weight;

        let loss = match sample.task {
            Task::Nmt => {
                let src = sample.src_ids.as_ref().expect("nmt sample has source ids");
                let mut fwd = Forward::train(&mut drop_rng);
                let enc = model.encode_text(src, sample.src_lang, &mut fwd)?;
                let lp = model.decode_logprobs(&enc, &dec_input, sample.tgt_lang, &mut fwd)?;
                if phase.kd_enabled {
                    unreachable!("kd is validated to be phase-3/ST only");
                }
                cross_entropy(&lp, &dec_target, PAD, smoothing)?
            }
            Task::Asr | Task::St => {
                let feats = sample.speech.as_ref().expect("speech sample has features");
                let mut aug_rng = rng::stream(
                    self.cfg.train.seed,
                    &[tag::AUGMENT, fnv1a(sample.id.as_bytes()), phase.phase as u64, epoch as u64],
                );
                let mut feats = feats.clone();
                if phase.time_stretch {
                    feats = time_stretch(&feats, &self.cfg.time_stretch, &mut aug_rng);
                }
                if phase.spec_augment {
                    feats = spec_augment(&feats, &self.cfg.spec_augment, &mut aug_rng);
                }
                let transcript = sample
                    .transcript_ids
                    .as_ref()
                    .expect("speech sample has a transcript");
                let t_out = frontend_output_len(feats.num_frames(), self.cfg.model.conv_blocks);
                if feats.num_frames() < MIN_SPEECH_FRAMES
                    || (ctc_w > 0.0 && !ctc_feasible(t_out, transcript))
                {
                    return Ok(None);
                }
                let mut fwd = Forward::train(&mut drop_rng);
                let (enc, frontend_out) = model.encode_speech(&feats, sample.src_lang, &mut fwd)?;
                let lp = model.decode_logprobs(&enc, &dec_input, sample.tgt_lang, &mut fwd)?;

                let main = if sample.task == Task::St && phase.kd_enabled {
                    let teacher_store = self
                        .teacher
                        .as_ref()
                        .ok_or_else(|| Error::Train("kd enabled but no phase-1 teacher".into()))?;
                    let teacher = Model::new(&self.cfg.model, teacher_store);
                    let mut tf = Forward::eval();
                    let tenc = teacher.encode_text(transcript, sample.src_lang, &mut tf)?;
                    let tlp = teacher.decode_logprobs(&tenc, &dec_input, sample.tgt_lang, &mut tf)?;
                    let probs: Vec<F> = tlp.data().iter().map(|l| l.exp()).collect();
                    let teacher_probs = Tensor::new(tlp.shape().to_vec(), probs);
                    kd_loss(
                        &lp,
                        &teacher_probs,
                        &dec_target,
                        PAD,
                        smoothing,
                        &KdConfig { kd_weight: phase.kd_weight },
                    )?
                } else {
                    cross_entropy(&lp, &dec_target, PAD, smoothing)?
                };

                if ctc_w > 0.0 {
                    let ctc_lp = model.ctc_head(&frontend_out)?;
                    let raw = ctc_loss(&ctc_lp, transcript, BLANK)?;
                    // Normalize by target length for cross-task scale comparability.
                    let norm = raw.scale(F::from_f64(1.0 / transcript.len().max(1) as f64));
                    main.add(&norm.scale(F::from_f64(ctc_w)))
                } else {
                    main
                }
            }
        };
        Ok(Some(loss))
    }

    fn run_batch(
        &mut self,
        task: Task,
        batch: &[usize],
        phase: &PhaseConfig,
        epoch: usize,
    ) -> Result<BatchOutcome<F>> {
        let weight = F::from_f64(task.weight(&phase.weights));
        let mut out = BatchOutcome {
            grads: IndexMap::new(),
            raw_loss_sum: 0.0,
            contributing: 0,
            infeasible: 0,
            non_finite: 0,
        };
        for (pos, &si) in batch.iter().enumerate() {
            self.store.zero_grads();
            let sample_id = self.samples[si].id.clone();
            let loss = {
                let sample = &self.samples[si];
                match self.sample_loss(sample, phase, epoch, pos)? {
                    Some(l) => l,
                    None => {
                        out.infeasible += 1;
                        continue;
                    }
                }
            };
            let raw = loss.item().to_f64_lossy();
            if !raw.is_finite() {
                return Err(Error::Train(format!(
                    "non-finite loss {raw} at step {}, sample {sample_id}, task {}",
                    self.completed,
                    task.name()
                )));
            }
            let weighted = loss.scale(weight);
            weighted.backward();

            let mut finite = true;
            let mut collected: Vec<(String, Vec<F>)> = Vec::new();
            for (name, t) in self.store.iter() {
                if let Some(g) = t.grad() {
                    if g.iter().any(|x| !x.is_finite()) {
                        finite = false;
                        break;
                    }
                    collected.push((name.to_string(), g));
                }
            }
            if !finite {
                out.non_finite += 1;
                continue;
            }
            out.raw_loss_sum += raw;
            out.contributing += 1;
            for (name, g) in collected {
                match out.grads.get_mut(&name) {
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(&g) {
                            *a += *b;
                        }
                    }
                    None => {
                        out.grads.insert(name, g);
                    }
                }
            }
        }
        Ok(out)
    }

    fn run(&mut self, max_steps: Option<usize>) -> Result<()> {
        let total: usize = self.cfg.phases.iter().map(|p| p.steps).sum();
        let mut last_phase: Option<u8> = if self.completed == 0 {
            None
        } else {
            Some(curriculum_phase(self.completed.saturating_sub(1), &self.cfg.phases)?.phase)
        };

        'outer: while self.completed < total {
            if let Some(cap) = max_steps {
                if self.completed >= cap {
                    break;
                }
            }
            let phase = curriculum_phase(self.completed, &self.cfg.phases)?.clone();
            let phase_start: usize = self
                .cfg
                .phases
                .iter()
                .take_while(|p| p.phase != phase.phase)
                .map(|p| p.steps)
                .sum();
            let phase_end = phase_start + phase.steps;
            let epoch = self.epochs.get(&phase.phase).copied().unwrap_or(0);
            let plan = self.epoch_plan(&phase, epoch);
            let mut plan_exhausted = true;

            for (task, batch) in plan {
                if self.completed >= phase_end {
                    plan_exhausted = false;
                    break;
                }
                if let Some(cap) = max_steps {
                    if self.completed >= cap {
                        break 'outer;
                    }
                }
                if last_phase != Some(phase.phase) {
                    self.log_lines.push(format!(
                        "# phase {} start: tasks={} weights asr={} nmt={} st={} ctc_weight={} kd={}",
                        phase.phase,
                        phase
                            .tasks
                            .iter()
                            .map(|t| t.name())
                            .collect::<Vec<_>>()
                            .join(","),
                        phase.weights.asr,
                        phase.weights.nmt,
                        phase.weights.st,
                        phase.weights.ctc_weight,
                        phase.kd_enabled
                    ));
                    last_phase = Some(phase.phase);
                }

                let outcome = self.run_batch(task, &batch, &phase, epoch)?;
                self.report.skipped_infeasible_ctc += outcome.infeasible;
                self.report.skipped_non_finite_grad += outcome.non_finite;

                let lr_step = if self.cfg.train.lr_reset_per_phase {
                    self.completed - phase_start + 1
                } else {
                    self.completed + 1
                };
                let lr = lr_inverse_sqrt(lr_step, self.cfg.train.base_lr, self.cfg.train.warmup);

                if outcome.contributing > 0 {
                    let mut grads = outcome.grads;
                    let inv_n = F::from_f64(1.0 / outcome.contributing as f64);
                    let mut sq_sum = 0.0f64;
                    for g in grads.values_mut() {
                        for x in g.iter_mut() {
                            *x = *x * inv_n;
                            let xf = x.to_f64_lossy();
                            sq_sum += xf * xf;
                        }
                    }
                    let norm = sq_sum.sqrt();
                    let clip = self.cfg.train.clip_norm;
                    if clip > 0.0 && norm > clip {
                        let scale = F::from_f64(clip / norm);
                        for g in grads.values_mut() {
                            for x in g.iter_mut() {
                                *x = *x * scale;
                            }
                        }
                    }
                    adam_step(&mut self.store, &grads, &mut self.opt, lr);
                }

                let raw_mean = if outcome.contributing > 0 {
                    outcome.raw_loss_sum / outcome.contributing as f64
                } else {
                    0.0
                };
                let record = StepRecord {
                    step: self.completed + 1,
                    phase: phase.phase,
                    task,
                    raw_loss: raw_mean,
                    weighted_loss: raw_mean * task.weight(&phase.weights),
                    lr,
                };
                if record.step % self.cfg.train.log_interval == 0 || record.step == total {
                    self.log_lines.push(format!(
                        "{}\t{}\t{}\t{:.6e}\t{:.6e}",
                        record.step,
                        record.phase,
                        record.task.name(),
                        record.raw_loss,
                        record.lr
                    ));
                }
                self.report.records.push(record);
                self.completed += 1;

                if self.completed == phase_end {
                    // Phase boundary: keep a named copy (the phase-1 final is
                    // the KD teacher) and a resumable step checkpoint.
                    self.store.save(&self.out_dir.join(format!("phase{}_final.ckpt", phase.phase)))?;
                    if phase.phase == 1 {
                        self.teacher = Some(self.store.clone_frozen());
                    }
                    self.save_checkpoint()?;
                    plan_exhausted = false;
                    break;
                }
            }

            if plan_exhausted {
                self.epochs.insert(phase.phase, epoch + 1);
                self.save_checkpoint()?;
            }
        }

        if max_steps.is_none() {
            let final_path = self.out_dir.join("final.ckpt");
            self.store.save(&final_path)?;
            fs::write(final_path.with_extension("meta"), self.meta_text())?;
            self.report.final_checkpoint = final_path;
        }
        self.flush_log()?;
        self.report.log_path = self.out_dir.join("train.log");
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PhaseConfig;
    use crate::losses::LossWeights;

    fn phase(phase: u8, steps: usize) -> PhaseConfig {
        PhaseConfig {
            phase,
            steps,
            tasks: vec![Task::St],
            weights: LossWeights::default(),
            spec_augment: true,
            time_stretch: false,
            kd_enabled: false,
            kd_weight: 0.7,
        }
    }

    #[test]
    fn schedule_peak_and_decay() {
        for &base in &[2e-3, 1e-3, 8e-4, 5e-4, 3e-4] {
            for &warmup in &[2000usize, 6000, 10000] {
                assert_eq!(lr_inverse_sqrt(warmup, base, warmup), base);
                assert_eq!(lr_inverse_sqrt(4 * warmup, base, warmup), base / 2.0);
            }
        }
        assert!((lr_inverse_sqrt(8000, 1e-3, 2000) - 5e-4).abs() < 1e-18);
        assert!((lr_inverse_sqrt(1, 1e-3, 2000) - 1e-3 / 2000.0).abs() < 1e-18);
    }

    #[test]
    fn curriculum_boundaries() {
        let phases = vec![phase(1, 1000), phase(2, 2000), phase(3, 500)];
        assert_eq!(curriculum_phase(0, &phases).unwrap().phase, 1);
        assert_eq!(curriculum_phase(999, &phases).unwrap().phase, 1);
        assert_eq!(curriculum_phase(1000, &phases).unwrap().phase, 2);
        assert_eq!(curriculum_phase(3499, &phases).unwrap().phase, 3);
        assert!(curriculum_phase(3500, &phases).is_err());
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        let mut store = ParameterStore::<f64>::new();
        store.insert("w", Tensor::param(vec![2], vec![1.0, -2.0]));
        let mut state = OptimizerState::new(&store);
        let mut grads = IndexMap::new();
        grads.insert("w".to_string(), vec![0.5, -0.25]);
        adam_step(&mut store, &grads, &mut state, 1e-2);
        let w = store.get("w").data();
        assert!((w[0] - (1.0 - 1e-2)).abs() < 1e-8);
        assert!((w[1] - (-2.0 + 1e-2)).abs() < 1e-8);
    }

    #[test]
    fn adam_zero_gradient_leaves_parameters() {
        let mut store = ParameterStore::<f64>::new();
        store.insert("w", Tensor::param(vec![1], vec![3.0]));
        let mut state = OptimizerState::new(&store);
        let grads = IndexMap::new();
        adam_step(&mut store, &grads, &mut state, 1e-2);
        assert_eq!(store.get("w").data(), &[3.0]);
        assert_eq!(state.step, 1);
    }
}
