//! Training objectives: label-smoothed cross-entropy, CTC forward-backward,
//! the KD/CE mixture, and multi-task weighting.
//!
//! All losses are graph nodes on top of log-probability tensors, so they
//! backpropagate through the model like any other op.

use crate::scalar::Scalar;
use crate::tensor::{accumulate, make_node, Tensor};
use crate::{Error, Result};

/// Per-task loss weights plus the auxiliary CTC tradeoff.
#[derive(Debug, Clone, Copy)]
pub struct LossWeights {
    pub asr: f64,
    pub nmt: f64,
    pub st: f64,
    pub ctc_weight: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { asr: 0.5, nmt: 0.5, st: 1.0, ctc_weight: 0.3 }
    }
}

/// Word-level knowledge-distillation mixture: `kd_weight` on the KL term,
/// the rest on ground-truth cross-entropy.
#[derive(Debug, Clone, Copy)]
pub struct KdConfig {
    pub kd_weight: f64,
}

impl Default for KdConfig {
    fn default() -> Self {
        KdConfig { kd_weight: 0.7 }
    }
}

/// Tasks the unified model serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    Asr,
    Nmt,
    St,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Asr => "asr",
            Task::Nmt => "nmt",
            Task::St => "st",
        }
    }

    pub fn parse(s: &str) -> Result<Task> {
        match s {
            "asr" => Ok(Task::Asr),
            "nmt" => Ok(Task::Nmt),
            "st" => Ok(Task::St),
            _ => Err(Error::Config(format!("unknown task {s:?}"))),
        }
    }

    pub fn weight(self, w: &LossWeights) -> f64 {
        match self {
            Task::Asr => w.asr,
            Task::Nmt => w.nmt,
            Task::St => w.st,
        }
    }

    pub fn uses_speech(self) -> bool {
        matches!(self, Task::Asr | Task::St)
    }
}

/// Mean negative log-likelihood over non-pad positions, with optional
/// uniform label smoothing. Pad positions contribute nothing.
pub fn cross_entropy<F: Scalar>(
    log_probs: &Tensor<F>,
    targets: &[usize],
    pad_id: usize,
    smoothing: f64,
) -> Result<Tensor<F>> {
    let (l, v) = (log_probs.shape()[0], log_probs.shape()[1]);
    if targets.len() != l {
        return Err(Error::Loss(format!(
            "targets length {} does not match {l} log-prob rows",
            targets.len()
        )));
    }
    let active: Vec<usize> = (0..l).filter(|&i| targets[i] != pad_id).collect();
    if active.is_empty() {
        return Err(Error::Loss("all-pad target".into()));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= v) {
        return Err(Error::Loss(format!("target id {bad} outside vocabulary of {v}")));
    }
    let n = F::from_f64(active.len() as f64);
    let one_m_eps = F::from_f64(1.0 - smoothing);
    let eps_per_v = F::from_f64(smoothing / v as f64);

    let mut loss = F::zero();
    for &i in &active {
        let row = &log_probs.data()[i * v..(i + 1) * v];
        loss = loss - one_m_eps * row[targets[i]];
        if smoothing > 0.0 {
            let mean: F = row.iter().cloned().sum();
            loss = loss - eps_per_v * mean;
        }
    }
    loss = loss / n;

    let parent = log_probs.clone();
    let targets_b = targets.to_vec();
    Ok(make_node(
        vec![1],
        vec![loss],
        vec![log_probs.clone()],
        Some(Box::new(move |go, _| {
            let g = go[0];
            let mut d = vec![F::zero(); parent.numel()];
            for i in 0..l {
                if targets_b[i] == pad_id {
                    continue;
                }
                for j in 0..v {
                    let mut val = if j == targets_b[i] { one_m_eps } else { F::zero() };
                    val += eps_per_v;
                    d[i * v + j] = -g * val / n;
                }
            }
            accumulate(&parent, &d);
        })),
    ))
}

/// Can any blank-augmented alignment of `target` fit in `t` frames?
pub fn ctc_feasible(t: usize, target: &[usize]) -> bool {
    let repeats = target.windows(2).filter(|w| w[0] == w[1]).count();
    t >= target.len() + repeats
}

fn log_add<F: Scalar>(a: F, b: F) -> F {
    if a == F::neg_infinity() {
        return b;
    }
    if b == F::neg_infinity() {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// CTC loss: minus the log of the total probability of all frame labelings
/// that collapse to `target`, via the forward algorithm in log space over
/// the blank-interleaved label sequence. Returns a +inf sentinel (constant,
/// no gradient) when no alignment fits.
pub fn ctc_loss<F: Scalar>(
    log_probs: &Tensor<F>,
    target: &[usize],
    blank_id: usize,
) -> Result<Tensor<F>> {
    let (t, v) = (log_probs.shape()[0], log_probs.shape()[1]);
    if target.iter().any(|&x| x == blank_id) {
        return Err(Error::Loss("CTC target must not contain the blank id".into()));
    }
    if let Some(&bad) = target.iter().find(|&&x| x >= v) {
        return Err(Error::Loss(format!("CTC target id {bad} outside vocabulary of {v}")));
    }
    if !ctc_feasible(t, target) {
        return Ok(Tensor::scalar(F::infinity()));
    }

    // Blank-interleaved label sequence l'.
    let s_len = 2 * target.len() + 1;
    let lab = |s: usize| -> usize {
        if s % 2 == 0 {
            blank_id
        } else {
            target[s / 2]
        }
    };
    let lp = |ti: usize, k: usize| log_probs.data()[ti * v + k];
    let ninf = F::neg_infinity();

    // Forward variables, all time steps kept for the backward pass.
    let mut alpha = vec![ninf; t * s_len];
    alpha[0] = lp(0, blank_id);
    if s_len > 1 {
        alpha[1] = lp(0, lab(1));
    }
    for ti in 1..t {
        for s in 0..s_len {
            let mut a = alpha[(ti - 1) * s_len + s];
            if s >= 1 {
                a = log_add(a, alpha[(ti - 1) * s_len + s - 1]);
            }
            if s >= 2 && lab(s) != blank_id && lab(s) != lab(s - 2) {
                a = log_add(a, alpha[(ti - 1) * s_len + s - 2]);
            }
            alpha[ti * s_len + s] = if a == ninf { ninf } else { a + lp(ti, lab(s)) };
        }
    }
    let mut log_p = alpha[(t - 1) * s_len + s_len - 1];
    if s_len > 1 {
        log_p = log_add(log_p, alpha[(t - 1) * s_len + s_len - 2]);
    }
    if log_p == ninf {
        return Ok(Tensor::scalar(F::infinity()));
    }

    // Backward variables (Graves convention: include the emission at t).
    let mut beta = vec![ninf; t * s_len];
    beta[(t - 1) * s_len + s_len - 1] = lp(t - 1, blank_id);
    if s_len > 1 {
        beta[(t - 1) * s_len + s_len - 2] = lp(t - 1, lab(s_len - 2));
    }
    for ti in (0..t - 1).rev() {
        for s in 0..s_len {
            let mut b = beta[(ti + 1) * s_len + s];
            if s + 1 < s_len {
                b = log_add(b, beta[(ti + 1) * s_len + s + 1]);
            }
            if s + 2 < s_len && lab(s) != blank_id && lab(s) != lab(s + 2) {
                b = log_add(b, beta[(ti + 1) * s_len + s + 2]);
            }
            beta[ti * s_len + s] = if b == ninf { ninf } else { b + lp(ti, lab(s)) };
        }
    }

    let parent = log_probs.clone();
    let target_b = target.to_vec();
    Ok(make_node(
        vec![1],
        vec![-log_p],
        vec![log_probs.clone()],
        Some(Box::new(move |go, _| {
            // dL/d lp[t,k] = -exp(logsumexp_{s: l'_s = k}(alpha + beta - lp[t,k]) - logP).
            // alpha and beta both include the emission at t, hence the -lp term.
            let g = go[0];
            let mut grads = vec![F::zero(); t * v];
            for ti in 0..t {
                let mut per_k = vec![F::neg_infinity(); v];
                for s in 0..s_len {
                    let k = if s % 2 == 0 { blank_id } else { target_b[s / 2] };
                    let a = alpha[ti * s_len + s];
                    let b = beta[ti * s_len + s];
                    if a == F::neg_infinity() || b == F::neg_infinity() {
                        continue;
                    }
                    per_k[k] = log_add(per_k[k], a + b - parent.data()[ti * v + k]);
                }
                for k in 0..v {
                    if per_k[k] != F::neg_infinity() {
                        grads[ti * v + k] = -g * (per_k[k] - log_p).exp();
                    }
                }
            }
            accumulate(&parent, &grads);
        })),
    ))
}

/// `kd_weight * mean KL(teacher || student) + (1 - kd_weight) * CE`, over
/// non-pad positions. Teacher rows are probabilities and receive no
/// gradient.
pub fn kd_loss<F: Scalar>(
    student_log_probs: &Tensor<F>,
    teacher_probs: &Tensor<F>,
    targets: &[usize],
    pad_id: usize,
    smoothing: f64,
    cfg: &KdConfig,
) -> Result<Tensor<F>> {
    if student_log_probs.shape() != teacher_probs.shape() {
        return Err(Error::Loss(format!(
            "teacher shape {:?} does not match student shape {:?}",
            teacher_probs.shape(),
            student_log_probs.shape()
        )));
    }
    let kl = kl_teacher_student(student_log_probs, teacher_probs, targets, pad_id)?;
    let ce = cross_entropy(student_log_probs, targets, pad_id, smoothing)?;
    Ok(kl
        .scale(F::from_f64(cfg.kd_weight))
        .add(&ce.scale(F::from_f64(1.0 - cfg.kd_weight))))
}

/// Mean KL(teacher || student) over non-pad rows.
fn kl_teacher_student<F: Scalar>(
    student_log_probs: &Tensor<F>,
    teacher_probs: &Tensor<F>,
    targets: &[usize],
    pad_id: usize,
) -> Result<Tensor<F>> {
    let (l, v) = (student_log_probs.shape()[0], student_log_probs.shape()[1]);
    if targets.len() != l {
        return Err(Error::Loss("targets length mismatch in KD".into()));
    }
    let active: Vec<usize> = (0..l).filter(|&i| targets[i] != pad_id).collect();
    if active.is_empty() {
        return Err(Error::Loss("all-pad target in KD".into()));
    }
    let n = F::from_f64(active.len() as f64);
    let mut total = F::zero();
    for &i in &active {
        for j in 0..v {
            let p = teacher_probs.data()[i * v + j];
            if p > F::zero() {
                total += p * (p.ln() - student_log_probs.data()[i * v + j]);
            }
        }
    }
    total = total / n;

    let (ps, pt) = (student_log_probs.clone(), teacher_probs.clone());
    let targets_b = targets.to_vec();
    Ok(make_node(
        vec![1],
        vec![total],
        vec![student_log_probs.clone()],
        Some(Box::new(move |go, _| {
            let g = go[0];
            let mut d = vec![F::zero(); ps.numel()];
            for i in 0..l {
                if targets_b[i] == pad_id {
                    continue;
                }
                for j in 0..v {
                    d[i * v + j] = -g * pt.data()[i * v + j] / n;
                }
            }
            accumulate(&ps, &d);
        })),
    ))
}

/// Weighted sum of per-task losses. Speech tasks are expected to already
/// include their `ctc_weight`-scaled auxiliary term.
pub fn multitask_loss<F: Scalar>(per_task: &[(Task, Tensor<F>)], w: &LossWeights) -> Tensor<F> {
    let mut total = Tensor::scalar(F::zero());
    for (task, loss) in per_task {
        total = total.add(&loss.scale(F::from_f64(task.weight(w))));
    }
    total
}
