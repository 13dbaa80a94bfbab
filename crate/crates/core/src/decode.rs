//! Length-normalized beam search with optional multi-model ensembling.
//!
//! Ensembles average per-step probability rows (not log-probabilities)
//! across models and re-log the mean for scoring. Decoding is deterministic:
//! ties break by token id, and among finished hypotheses by earlier finish.

use crate::model::{EncoderStates, Model};
use crate::scalar::Scalar;
use crate::text::{LanguageId, BOS, EOS};
use crate::{Error, Result};

/// A partial or finished decode: bos-prefixed ids and the cumulative
/// log-probability. Finished means the last id is eos.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub ids: Vec<usize>,
    pub score: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// Generated length (excludes the bos prefix), floored at 1.
    fn gen_len(&self) -> usize {
        self.ids.len().saturating_sub(1).max(1)
    }

    pub fn normalized_score(&self, length_penalty: f64) -> f64 {
        self.score / (self.gen_len() as f64).powf(length_penalty)
    }
}

/// Beam-search settings. `banned_ids` are never generated (the CLI bans
/// pad/bos/unk/blank so hypotheses always carry real text).
#[derive(Debug, Clone)]
pub struct DecodeConfig {
    pub beam: usize,
    pub max_len: usize,
    pub min_len: usize,
    pub length_penalty: f64,
    pub bos_id: usize,
    pub eos_id: usize,
    pub banned_ids: Vec<usize>,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam: 5,
            max_len: 64,
            min_len: 1,
            length_penalty: 1.0,
            bos_id: BOS,
            eos_id: EOS,
            banned_ids: Vec::new(),
        }
    }
}

/// Length cap heuristic: 2 + 2x the source length (frontend frames for
/// speech, tokens for text).
pub fn default_max_len(source_len: usize) -> usize {
    2 + 2 * source_len
}

/// Anything that can score the next token given a bos-prefixed prefix.
pub trait StepScorer<F: Scalar> {
    fn vocab_size(&self) -> usize;
    fn log_probs(&mut self, prefix: &[usize]) -> Result<Vec<F>>;
}

/// Scorer over a real model plus its per-source encoder states.
pub struct ModelScorer<'a, F: Scalar> {
    pub model: Model<'a, F>,
    pub enc: EncoderStates<F>,
    pub tgt_lang: LanguageId,
}

impl<'a, F: Scalar> StepScorer<F> for ModelScorer<'a, F> {
    fn vocab_size(&self) -> usize {
        self.model.cfg.vocab_size
    }

    fn log_probs(&mut self, prefix: &[usize]) -> Result<Vec<F>> {
        self.model.decode_step(&self.enc, prefix, self.tgt_lang)
    }
}

/// Mean of the per-model probability rows for the next step, as
/// probabilities. All models must share a vocabulary.
pub fn ensemble_distribution<F: Scalar, S: StepScorer<F>>(
    scorers: &mut [S],
    prefix: &[usize],
) -> Result<Vec<f64>> {
    let v = scorers
        .first()
        .ok_or_else(|| Error::Decode("ensemble needs at least one model".into()))?
        .vocab_size();
    if scorers.iter().any(|s| s.vocab_size() != v) {
        return Err(Error::Decode("ensemble models must share a vocabulary".into()));
    }
    let mut mean = vec![0.0f64; v];
    for s in scorers.iter_mut() {
        let row = s.log_probs(prefix)?;
        for (m, l) in mean.iter_mut().zip(&row) {
            *m += l.to_f64_lossy().exp();
        }
    }
    let k = scorers.len() as f64;
    for m in &mut mean {
        *m /= k;
    }
    Ok(mean)
}

/// Candidate ordering: higher normalized score first, then smaller token
/// sequence, then finished-earlier.
fn better(a: &Hypothesis, b: &Hypothesis, penalty: f64) -> std::cmp::Ordering {
    b.normalized_score(penalty)
        .partial_cmp(&a.normalized_score(penalty))
        .unwrap_or(std::cmp::Ordering::Equal)
        .then_with(|| a.ids.cmp(&b.ids))
        .then_with(|| b.finished.cmp(&a.finished))
}

/// Standard length-normalized beam search over one or more scorers
/// (averaged in probability space when more than one). Finished hypotheses
/// retire to a pool; the pool best is returned. `max_len` forces
/// termination by allowing only eos once a hypothesis reaches the cap.
pub fn beam_search<F: Scalar, S: StepScorer<F>>(
    scorers: &mut [S],
    cfg: &DecodeConfig,
) -> Result<Hypothesis> {
    assert!(cfg.beam >= 1, "beam must be >= 1");
    let mut live = vec![Hypothesis { ids: vec![cfg.bos_id], score: 0.0, finished: false }];
    let mut pool: Vec<Hypothesis> = Vec::new();

    for _ in 0..=cfg.max_len {
        let mut candidates: Vec<Hypothesis> = Vec::new();
        for hyp in &live {
            let dist = ensemble_distribution(scorers, &hyp.ids)?;
            let gen_len = hyp.ids.len() - 1;
            for (tok, p) in dist.iter().enumerate() {
                if cfg.banned_ids.contains(&tok) {
                    continue;
                }
                if tok == cfg.eos_id && gen_len < cfg.min_len {
                    continue;
                }
                if tok != cfg.eos_id && gen_len >= cfg.max_len {
                    continue;
                }
                let lp = p.max(f64::MIN_POSITIVE).ln();
                let mut ids = hyp.ids.clone();
                ids.push(tok);
                candidates.push(Hypothesis {
                    ids,
                    score: hyp.score + lp,
                    finished: tok == cfg.eos_id,
                });
            }
        }
        if candidates.is_empty() {
            break;
        }
        candidates.sort_by(|a, b| better(a, b, cfg.length_penalty));
        candidates.truncate(cfg.beam);
        live = Vec::new();
        for c in candidates {
            if c.finished {
                pool.push(c);
            } else {
                live.push(c);
            }
        }
        if live.is_empty() {
            break;
        }
    }
    // The cap guarantees every surviving path was offered eos; anything
    // still live had no feasible finish (all-banned edge), so fall back.
    pool.extend(live);
    pool.sort_by(|a, b| better(a, b, cfg.length_penalty));
    pool.into_iter()
        .next()
        .ok_or_else(|| Error::Decode("beam search produced no hypotheses".into()))
}
