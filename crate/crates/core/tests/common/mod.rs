//! Shared test oracles and fixtures. Everything here is independent of the
//! implementation paths it checks: gradients come from central finite
//! differences over forward evaluations, CTC from explicit path
//! enumeration, decoding optima from exhaustive sequence search.

#![allow(dead_code)]

use multist_core::config::{DecodeParams, FullConfig, PhaseConfig, TrainParams};
use multist_core::decode::{DecodeConfig, Hypothesis, StepScorer};
use multist_core::losses::{LossWeights, Task};
use multist_core::model::ModelConfig;
use multist_core::rng;
use multist_core::text::LanguageSet;
use multist_core::Result;

// ---- gradient oracle ----

/// Central finite differences of a scalar function at `x`.
pub fn numeric_grad(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut g = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let hi = f(&probe);
        probe[i] = x[i] - step;
        let lo = f(&probe);
        probe[i] = x[i];
        g.push((hi - lo) / (2.0 * step));
    }
    g
}

/// Max relative error between analytic and numeric gradients, with the
/// denominator floored at 1 so near-zero entries compare absolutely.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1.0))
        .fold(0.0, f64::max)
}

/// Deterministic values in [-1, 1] \ (-0.05, 0.05), clear of the relu kink.
pub fn offset_randoms(n: usize, seed: u64) -> Vec<f64> {
    use rand::Rng;
    let mut r = rng::stream(seed, &[7001]);
    (0..n)
        .map(|_| {
            let mag: f64 = r.gen_range(0.05..1.0);
            if r.gen::<bool>() {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

// ---- CTC oracle ----

fn collapse(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = usize::MAX;
    for &p in path {
        if p != prev && p != blank {
            out.push(p);
        }
        prev = p;
    }
    out
}

/// Brute-force CTC loss: enumerate all V^T frame labelings, collapse each,
/// and sum the probabilities of those that match the target.
pub fn ctc_brute_force(log_probs: &[Vec<f64>], target: &[usize], blank: usize) -> f64 {
    let t = log_probs.len();
    let v = log_probs[0].len();
    let mut total = 0.0f64;
    let mut path = vec![0usize; t];
    loop {
        let lp: f64 = path.iter().enumerate().map(|(i, &k)| log_probs[i][k]).sum();
        if collapse(&path, blank) == target {
            total += lp.exp();
        }
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == t {
                return if total > 0.0 { -total.ln() } else { f64::INFINITY };
            }
            path[pos] += 1;
            if path[pos] < v {
                break;
            }
            path[pos] = 0;
            pos += 1;
        }
    }
}

// ---- decode fixtures and oracles ----

/// Deterministic synthetic model: each prefix maps to a sharpened random
/// log-probability row, stable across calls.
pub struct PeakedScorer {
    pub seed: u64,
    pub vocab: usize,
    pub sharpness: f64,
}

impl PeakedScorer {
    fn row(&self, prefix: &[usize]) -> Vec<f64> {
        use rand::Rng;
        let mut bytes = Vec::with_capacity(prefix.len() * 8);
        for &id in prefix {
            bytes.extend_from_slice(&(id as u64).to_le_bytes());
        }
        let key = rng::fnv1a(&bytes);
        let mut r = rng::stream(self.seed, &[4242, key]);
        let logits: Vec<f64> = (0..self.vocab)
            .map(|_| self.sharpness * (r.gen::<f64>() * 2.0 - 1.0))
            .collect();
        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = logits.iter().map(|l| (l - mx).exp()).sum::<f64>().ln() + mx;
        logits.iter().map(|l| l - lse).collect()
    }
}

impl StepScorer<f64> for PeakedScorer {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn log_probs(&mut self, prefix: &[usize]) -> Result<Vec<f64>> {
        Ok(self.row(prefix))
    }
}

/// Step-by-step argmax decoding, written independently of beam_search.
pub fn greedy_reference<S: StepScorer<f64>>(scorer: &mut S, cfg: &DecodeConfig) -> Result<Hypothesis> {
    let mut ids = vec![cfg.bos_id];
    let mut score = 0.0;
    loop {
        let gen_len = ids.len() - 1;
        let row = scorer.log_probs(&ids)?;
        let mut best: Option<(usize, f64)> = None;
        for (tok, lp) in row.iter().enumerate() {
            if cfg.banned_ids.contains(&tok) {
                continue;
            }
            if tok == cfg.eos_id && gen_len < cfg.min_len {
                continue;
            }
            if tok != cfg.eos_id && gen_len >= cfg.max_len {
                continue;
            }
            if best.map(|(_, b)| *lp > b).unwrap_or(true) {
                best = Some((tok, *lp));
            }
        }
        let (tok, lp) = best.expect("at least eos must be available");
        ids.push(tok);
        score += lp;
        if tok == cfg.eos_id {
            return Ok(Hypothesis { ids, score, finished: true });
        }
    }
}

/// Exhaustive search over every complete sequence up to the length cap,
/// under the same constraints and tie-breaks as beam_search.
pub fn exhaustive_best<S: StepScorer<f64>>(scorer: &mut S, cfg: &DecodeConfig) -> Result<Hypothesis> {
    fn norm(h: &Hypothesis, penalty: f64) -> f64 {
        h.score / ((h.ids.len() - 1).max(1) as f64).powf(penalty)
    }
    fn consider(best: &mut Option<Hypothesis>, cand: Hypothesis, penalty: f64) {
        let replace = match best {
            None => true,
            Some(b) => {
                let (nb, nc) = (norm(b, penalty), norm(&cand, penalty));
                nc > nb || (nc == nb && cand.ids < b.ids)
            }
        };
        if replace {
            *best = Some(cand);
        }
    }
    fn recurse<S: StepScorer<f64>>(
        scorer: &mut S,
        cfg: &DecodeConfig,
        prefix: &mut Vec<usize>,
        score: f64,
        best: &mut Option<Hypothesis>,
    ) -> Result<()> {
        let gen_len = prefix.len() - 1;
        let row = scorer.log_probs(prefix)?;
        for (tok, lp) in row.iter().enumerate() {
            if cfg.banned_ids.contains(&tok) {
                continue;
            }
            if tok == cfg.eos_id {
                if gen_len >= cfg.min_len {
                    let mut ids = prefix.clone();
                    ids.push(tok);
                    consider(
                        best,
                        Hypothesis { ids, score: score + lp, finished: true },
                        cfg.length_penalty,
                    );
                }
                continue;
            }
            if gen_len >= cfg.max_len {
                continue;
            }
            prefix.push(tok);
            recurse(scorer, cfg, prefix, score + lp, best)?;
            prefix.pop();
        }
        Ok(())
    }
    let mut best = None;
    recurse(scorer, cfg, &mut vec![cfg.bos_id], 0.0, &mut best)?;
    Ok(best.expect("search space contains at least one finished sequence"))
}

// ---- edit-distance oracle ----

/// Plain recursive Levenshtein, exponential but obviously correct.
pub fn edit_distance_recursive(a: &[&str], b: &[&str]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let sub = edit_distance_recursive(&a[1..], &b[1..]) + usize::from(a[0] != b[0]);
    let del = edit_distance_recursive(&a[1..], b) + 1;
    let ins = edit_distance_recursive(a, &b[1..]) + 1;
    sub.min(del).min(ins)
}

// ---- toy training setups ----

pub fn toy_model_config(d_model: usize, langs: &[&str]) -> ModelConfig {
    ModelConfig {
        d_model,
        heads: if d_model % 4 == 0 { 4 } else { 2 },
        ffn: d_model * 2,
        enc_layers: 2,
        dec_layers: 2,
        conv_blocks: 3,
        convs_per_block: 3,
        transformer_per_block: 1,
        dropout: 0.1,
        vocab_size: 200,
        n_mels: 80,
        languages: LanguageSet::new(langs).unwrap(),
    }
}

pub fn toy_phase(phase: u8, steps: usize, tasks: Vec<Task>) -> PhaseConfig {
    PhaseConfig {
        phase,
        steps,
        tasks,
        weights: LossWeights {
            asr: if phase == 2 { 0.5 } else { 1.0 },
            nmt: if phase == 2 { 0.5 } else { 1.0 },
            st: 1.0,
            ctc_weight: 0.3,
        },
        spec_augment: true,
        time_stretch: phase != 3,
        kd_enabled: phase == 3,
        kd_weight: 0.7,
    }
}

/// Full toy run configuration over a prepared data directory.
pub fn toy_full_config(
    data_dir: &std::path::Path,
    out_dir: &std::path::Path,
    model: ModelConfig,
    phases: Vec<PhaseConfig>,
    seed: u64,
    batch_size: usize,
) -> FullConfig {
    FullConfig {
        features: multist_core::audio::FeatureConfig {
            n_mels: model.n_mels,
            ..Default::default()
        },
        model,
        train: TrainParams {
            seed,
            batch_size,
            base_lr: 1e-3,
            warmup: 200,
            label_smoothing: 0.1,
            ctc_weight: 0.3,
            clip_norm: 1.0,
            log_interval: 10,
            keep_checkpoints: 12,
            lr_reset_per_phase: false,
            data_dir: Some(data_dir.to_path_buf()),
            out_dir: Some(out_dir.to_path_buf()),
        },
        phases,
        spec_augment: Default::default(),
        time_stretch: Default::default(),
        decode: DecodeParams { beam: 5, length_penalty: 1.0, max_len: 0, min_len: 1 },
    }
}
