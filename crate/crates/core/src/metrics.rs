//! Corpus evaluation: BLEU-4 for translation, WER for recognition, both on
//! whitespace tokens.

use std::collections::HashMap;

use crate::{Error, Result};

/// Evaluation result: the corpus score plus per-sample scores.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub metric: String,
    pub corpus: f64,
    pub per_sample: Vec<f64>,
}

impl EvalReport {
    pub fn len(&self) -> usize {
        self.per_sample.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_sample.is_empty()
    }

    /// Tab-separated rows (index, score) followed by the summary line.
    pub fn render_tsv(&self) -> String {
        let mut out = String::from("index\tscore\n");
        for (i, s) in self.per_sample.iter().enumerate() {
            out.push_str(&format!("{i}\t{s:.4}\n"));
        }
        out.push_str(&self.summary_line());
        out.push('\n');
        out
    }

    /// Machine-readable single line.
    pub fn summary_line(&self) -> String {
        format!(
            "SUMMARY\tmetric={}\tscore={:.4}\tn={}",
            self.metric,
            self.corpus,
            self.per_sample.len()
        )
    }
}

fn ngram_counts<'a>(tokens: &[&'a str], n: usize) -> HashMap<Vec<&'a str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.to_vec()).or_insert(0) += 1;
        }
    }
    counts
}

const BLEU_EPS: f64 = 1e-16;

/// Corpus BLEU-4 on whitespace tokens: geometric mean of clipped n-gram
/// precisions (zero match counts smoothed by epsilon in the numerator)
/// times the brevity penalty `exp(min(0, 1 - ref_len/hyp_len))`, scaled to
/// [0, 100].
pub fn bleu<S: AsRef<str>>(hyps: &[S], refs: &[S]) -> Result<f64> {
    if hyps.len() != refs.len() {
        return Err(Error::Data(format!(
            "hypothesis count {} does not match reference count {}",
            hyps.len(),
            refs.len()
        )));
    }
    if hyps.is_empty() {
        return Err(Error::Data("empty corpus".into()));
    }
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;
    let mut matches = [0usize; 4];
    let mut totals = [0usize; 4];
    for (h, r) in hyps.iter().zip(refs) {
        let ht: Vec<&str> = h.as_ref().split_whitespace().collect();
        let rt: Vec<&str> = r.as_ref().split_whitespace().collect();
        hyp_len += ht.len();
        ref_len += rt.len();
        for n in 1..=4 {
            let hc = ngram_counts(&ht, n);
            let rc = ngram_counts(&rt, n);
            for (gram, c) in &hc {
                totals[n - 1] += c;
                if let Some(rcount) = rc.get(gram) {
                    matches[n - 1] += c.min(rcount);
                }
            }
        }
    }
    if hyp_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 0..4 {
        let num = if matches[n] == 0 { BLEU_EPS } else { matches[n] as f64 };
        let den = totals[n].max(1) as f64;
        log_sum += (num / den).ln();
    }
    let geo = (log_sum / 4.0).exp();
    let bp = (1.0 - ref_len as f64 / hyp_len as f64).min(0.0).exp();
    Ok(100.0 * geo * bp)
}

/// Sentence-level BLEU of one pair (same smoothing), for per-sample reports.
pub fn sentence_bleu(hyp: &str, reference: &str) -> f64 {
    bleu(&[hyp], &[reference]).unwrap_or(0.0)
}

/// Minimal token edit distance (substitutions, insertions, deletions all
/// cost 1).
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Word error rate: total edits over total reference tokens, on whitespace
/// tokens. References must be non-empty.
pub fn wer<S: AsRef<str>>(hyps: &[S], refs: &[S]) -> Result<f64> {
    if hyps.len() != refs.len() {
        return Err(Error::Data(format!(
            "hypothesis count {} does not match reference count {}",
            hyps.len(),
            refs.len()
        )));
    }
    if hyps.is_empty() {
        return Err(Error::Data("empty corpus".into()));
    }
    let mut edits = 0usize;
    let mut ref_tokens = 0usize;
    for (i, (h, r)) in hyps.iter().zip(refs).enumerate() {
        let ht: Vec<&str> = h.as_ref().split_whitespace().collect();
        let rt: Vec<&str> = r.as_ref().split_whitespace().collect();
        if rt.is_empty() {
            return Err(Error::Data(format!("empty reference at index {i}")));
        }
        edits += edit_distance(&ht, &rt);
        ref_tokens += rt.len();
    }
    Ok(edits as f64 / ref_tokens as f64)
}

/// Per-pair WER, for per-sample reports.
pub fn sentence_wer(hyp: &str, reference: &str) -> f64 {
    wer(&[hyp], &[reference]).unwrap_or(f64::NAN)
}

/// Full report for a task metric over a decoded corpus.
pub fn evaluate<S: AsRef<str>>(metric: &str, hyps: &[S], refs: &[S]) -> Result<EvalReport> {
    match metric {
        "bleu" => Ok(EvalReport {
            metric: "bleu".into(),
            corpus: bleu(hyps, refs)?,
            per_sample: hyps
                .iter()
                .zip(refs)
                .map(|(h, r)| sentence_bleu(h.as_ref(), r.as_ref()))
                .collect(),
        }),
        "wer" => Ok(EvalReport {
            metric: "wer".into(),
            corpus: wer(hyps, refs)?,
            per_sample: hyps
                .iter()
                .zip(refs)
                .map(|(h, r)| sentence_wer(h.as_ref(), r.as_ref()))
                .collect(),
        }),
        other => Err(Error::Config(format!("unknown metric {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bleu_identity_is_100() {
        let corpus = ["the cat sat on the mat", "a b c d e"];
        let score = bleu(&corpus, &corpus).unwrap();
        assert!((score - 100.0).abs() < 1e-9);
    }

    #[test]
    fn bleu_empty_hypotheses_is_zero() {
        let hyps = ["", ""];
        let refs = ["a b", "c d"];
        assert_eq!(bleu(&hyps, &refs).unwrap(), 0.0);
    }

    #[test]
    fn bleu_brevity_penalty_hand_case() {
        // Precisions 4/4, 3/3, 2/2, 1/1; BP = exp(1 - 5/4) ~ 0.7788.
        let score = bleu(&["a b c d"], &["a b c d e"]).unwrap();
        assert!((score - 100.0 * (1.0f64 - 5.0 / 4.0).exp()).abs() < 1e-9);
        assert!((score - 77.88).abs() < 0.01);
    }

    #[test]
    fn bleu_rejects_bad_corpora() {
        assert!(bleu(&["a"], &["a", "b"]).is_err());
        assert!(bleu::<&str>(&[], &[]).is_err());
    }

    #[test]
    fn wer_cases() {
        assert_eq!(wer(&["a b c"], &["a b c"]).unwrap(), 0.0);
        assert!((wer(&["a x c"], &["a b c"]).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(wer(&["b a"], &["a b"]).unwrap(), 1.0);
        assert!(wer(&["a"], &[""]).is_err());
    }

    #[test]
    fn wer_additive_over_splits() {
        let hyps = ["a b", "c", "x y z"];
        let refs = ["a b c", "c", "x q z"];
        let whole = wer(&hyps, &refs).unwrap();
        // numerators 1 + 0 + 1 over denominators 3 + 1 + 3.
        assert!((whole - 2.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn bleu_permutation_invariant() {
        let hyps = ["a b c", "d e", "f g h i"];
        let refs = ["a b x", "d e", "f g h z"];
        let a = bleu(&hyps, &refs).unwrap();
        let hyps2 = [hyps[2], hyps[0], hyps[1]];
        let refs2 = [refs[2], refs[0], refs[1]];
        let b = bleu(&hyps2, &refs2).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}
