//! Training-time feature augmentation: time/frequency masking and feature
//! temporal stretching. Both are deterministic given (input, params, seed).

use rand::Rng;

use crate::audio::FeatureMatrix;
use crate::rng::StreamRng;
use crate::scalar::Scalar;

/// Time/frequency masking parameters. Widths are sampled uniformly on
/// `[0, cap]`, starts uniformly over the valid range, masked cells set to 0
/// (the per-utterance mean after CMVN).
#[derive(Debug, Clone)]
pub struct SpecAugmentParams {
    pub time_mask: usize,
    pub freq_mask: usize,
    pub num_time_masks: usize,
    pub num_freq_masks: usize,
}

impl Default for SpecAugmentParams {
    fn default() -> Self {
        SpecAugmentParams {
            time_mask: 40,
            freq_mask: 4,
            num_time_masks: 2,
            num_freq_masks: 1,
        }
    }
}

/// Temporal stretch parameters. `window = None` stretches the whole
/// utterance with a single factor drawn from `[low, high]`.
#[derive(Debug, Clone)]
pub struct TimeStretchParams {
    pub window: Option<usize>,
    pub low: f64,
    pub high: f64,
}

impl Default for TimeStretchParams {
    fn default() -> Self {
        TimeStretchParams { window: None, low: 0.8, high: 1.25 }
    }
}

/// Zero out `num_time_masks` row bands and `num_freq_masks` column bands.
/// Unmasked cells are bit-identical to the input; the shape never changes.
pub fn spec_augment<F: Scalar>(
    f: &FeatureMatrix<F>,
    p: &SpecAugmentParams,
    rng: &mut StreamRng,
) -> FeatureMatrix<F> {
    let (t, cols) = (f.num_frames(), f.num_features());
    let mut out = f.clone();
    for _ in 0..p.num_time_masks {
        let cap = p.time_mask.min(t);
        let width = rng.gen_range(0..=cap);
        let start = rng.gen_range(0..=t - width);
        for row in start..start + width {
            for c in 0..cols {
                out.data_mut()[row * cols + c] = F::zero();
            }
        }
    }
    for _ in 0..p.num_freq_masks {
        let cap = p.freq_mask.min(cols);
        let width = rng.gen_range(0..=cap);
        let start = rng.gen_range(0..=cols - width);
        for row in 0..t {
            for c in start..start + width {
                out.data_mut()[row * cols + c] = F::zero();
            }
        }
    }
    out
}

/// Source row for each output row when stretching `t` frames by factor `s`:
/// output length `max(1, round(t/s))`, row `i` reads input `min(t-1,
/// floor(i*s))`. The selection is monotone non-decreasing.
pub fn stretch_indices(t: usize, s: f64) -> Vec<usize> {
    debug_assert!(t > 0 && s > 0.0);
    let out_len = ((t as f64 / s).round() as usize).max(1);
    (0..out_len)
        .map(|i| (((i as f64) * s).floor() as usize).min(t - 1))
        .collect()
}

/// Stretch with an explicit factor (no randomness), whole-utterance window.
pub fn time_stretch_with_factor<F: Scalar>(f: &FeatureMatrix<F>, s: f64) -> FeatureMatrix<F> {
    let (t, cols) = (f.num_frames(), f.num_features());
    let idx = stretch_indices(t, s);
    let mut data = Vec::with_capacity(idx.len() * cols);
    for &i in &idx {
        data.extend_from_slice(f.row(i));
    }
    FeatureMatrix::from_rows(idx.len(), cols, data)
}

/// Drop or repeat frames to simulate speed perturbation. With an unbounded
/// window a single factor is drawn for the utterance; with a finite window
/// every consecutive window of `w` input frames gets its own factor.
pub fn time_stretch<F: Scalar>(
    f: &FeatureMatrix<F>,
    p: &TimeStretchParams,
    rng: &mut StreamRng,
) -> FeatureMatrix<F> {
    let (t, cols) = (f.num_frames(), f.num_features());
    match p.window {
        None => {
            let s = rng.gen_range(p.low..=p.high);
            time_stretch_with_factor(f, s)
        }
        Some(w) => {
            let w = w.max(1);
            let mut data = Vec::new();
            let mut rows = 0;
            let mut start = 0;
            while start < t {
                let len = w.min(t - start);
                let s = rng.gen_range(p.low..=p.high);
                for i in stretch_indices(len, s) {
                    data.extend_from_slice(f.row(start + i));
                    rows += 1;
                }
                start += len;
            }
            FeatureMatrix::from_rows(rows, cols, data)
        }
    }
}
