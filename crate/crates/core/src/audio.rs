//! Acoustic feature extraction: WAV input, log-mel filterbanks, utterance
//! CMVN, and the binary feature-file format.
//!
//! The DSP contract is fixed: 16 kHz 16-bit mono PCM in, Hann window, FFT
//! size = smallest power of two covering the window, HTK mel scale over
//! 20 Hz..Nyquist, natural log with a 1e-10 floor. No resampling: anything
//! else is rejected up front so the surface stays testable.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::scalar::Scalar;
use crate::{Error, Result};

/// The only sample rate the pipeline accepts.
pub const SUPPORTED_SAMPLE_RATE: u32 = 16_000;

/// Mono audio in `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct Waveform<F: Scalar> {
    pub samples: Vec<F>,
    pub sample_rate: u32,
}

/// Log-mel extraction parameters.
#[derive(Debug, Clone)]
pub struct FeatureConfig {
    pub n_mels: usize,
    pub window_ms: u32,
    pub hop_ms: u32,
    pub sample_rate: u32,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            n_mels: 80,
            window_ms: 25,
            hop_ms: 10,
            sample_rate: SUPPORTED_SAMPLE_RATE,
        }
    }
}

impl FeatureConfig {
    pub fn window_samples(&self) -> usize {
        (self.sample_rate as usize * self.window_ms as usize) / 1000
    }

    pub fn hop_samples(&self) -> usize {
        (self.sample_rate as usize * self.hop_ms as usize) / 1000
    }

    fn validate(&self) -> Result<()> {
        if self.n_mels < 1 {
            return Err(Error::Features("n_mels must be >= 1".into()));
        }
        if self.hop_ms == 0 || self.window_ms < self.hop_ms {
            return Err(Error::Features(
                "window/hop must satisfy window_ms >= hop_ms > 0".into(),
            ));
        }
        Ok(())
    }
}

/// `t x f` grid of acoustic features, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<F: Scalar> {
    t: usize,
    f: usize,
    data: Vec<F>,
}

impl<F: Scalar> FeatureMatrix<F> {
    pub fn from_rows(t: usize, f: usize, data: Vec<F>) -> Self {
        assert_eq!(t * f, data.len(), "feature data must be t*f values");
        FeatureMatrix { t, f, data }
    }

    pub fn num_frames(&self) -> usize {
        self.t
    }

    pub fn num_features(&self) -> usize {
        self.f
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.f..(i + 1) * self.f]
    }

    pub fn get(&self, t: usize, f: usize) -> F {
        self.data[t * self.f + f]
    }

    pub(crate) fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }
}

/// Frame count for `n` samples: `1 + floor((n - window) / hop)`.
pub fn frame_count(n_samples: usize, window: usize, hop: usize) -> Option<usize> {
    if n_samples < window || hop == 0 {
        return None;
    }
    Some(1 + (n_samples - window) / hop)
}

// ---- WAV ----

fn read_u32(b: &[u8], off: usize) -> Option<u32> {
    b.get(off..off + 4).map(|s| u32::from_le_bytes(s.try_into().unwrap()))
}

fn read_u16(b: &[u8], off: usize) -> Option<u16> {
    b.get(off..off + 2).map(|s| u16::from_le_bytes(s.try_into().unwrap()))
}

/// Read a 16 kHz mono 16-bit PCM RIFF/WAVE file, scaling samples by 1/32768.
pub fn read_wav<F: Scalar>(path: &Path) -> Result<Waveform<F>> {
    let bytes = fs::read(path)
        .map_err(|e| Error::Wav(format!("cannot read {}: {e}", path.display())))?;
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Wav(format!("{}: not a RIFF/WAVE file", path.display())));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (codec, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    let mut off = 12;
    while off + 8 <= bytes.len() {
        let id = &bytes[off..off + 4];
        let size = read_u32(&bytes, off + 4).unwrap() as usize;
        let body = bytes
            .get(off + 8..off + 8 + size)
            .ok_or_else(|| Error::Wav(format!("{}: truncated chunk", path.display())))?;
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::Wav(format!("{}: malformed fmt chunk", path.display())));
                }
                fmt = Some((
                    read_u16(body, 0).unwrap(),
                    read_u16(body, 2).unwrap(),
                    read_u32(body, 4).unwrap(),
                    read_u16(body, 14).unwrap(),
                ));
            }
            b"data" => data = Some(body),
            _ => {} // skip LIST/fact/etc.
        }
        off += 8 + size + (size & 1); // chunks are word-aligned
    }

    let (codec, channels, rate, bits) =
        fmt.ok_or_else(|| Error::Wav(format!("{}: missing fmt chunk", path.display())))?;
    if codec != 1 {
        return Err(Error::Wav(format!(
            "{}: unsupported encoding (format tag {codec}, need PCM)",
            path.display()
        )));
    }
    if channels != 1 {
        return Err(Error::Wav(format!(
            "{}: multichannel input ({channels} channels, need mono)",
            path.display()
        )));
    }
    if bits != 16 {
        return Err(Error::Wav(format!(
            "{}: unsupported encoding ({bits}-bit, need 16-bit)",
            path.display()
        )));
    }
    if rate != SUPPORTED_SAMPLE_RATE {
        return Err(Error::Wav(format!(
            "{}: unsupported sample rate {rate} Hz (expected {SUPPORTED_SAMPLE_RATE})",
            path.display()
        )));
    }
    let data = data.ok_or_else(|| Error::Wav(format!("{}: missing data chunk", path.display())))?;
    if data.is_empty() {
        return Err(Error::Wav(format!("{}: empty data chunk", path.display())));
    }
    let scale = F::from_f64(1.0 / 32768.0);
    let samples = data
        .chunks_exact(2)
        .map(|c| F::from_f64(i16::from_le_bytes([c[0], c[1]]) as f64) * scale)
        .collect();
    Ok(Waveform { samples, sample_rate: rate })
}

/// Write a minimal PCM16 mono WAV. Samples are clamped to `[-1, 1]`.
pub fn write_wav<F: Scalar>(path: &Path, samples: &[F], sample_rate: u32) -> Result<()> {
    let mut payload = Vec::with_capacity(samples.len() * 2);
    for s in samples {
        let v = s.to_f64_lossy().clamp(-1.0, 1.0);
        let q = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        payload.extend_from_slice(&q.to_le_bytes());
    }
    let mut out = Vec::with_capacity(44 + payload.len());
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + payload.len() as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&payload);
    fs::write(path, out)?;
    Ok(())
}

// ---- log-mel ----

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank: `n_mels` rows over `n_fft/2 + 1` spectrum bins,
/// HTK mel spacing from 20 Hz to Nyquist, unit-peak triangles.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32) -> Vec<Vec<f64>> {
    let nyquist = sample_rate as f64 / 2.0;
    let mel_lo = hz_to_mel(20.0);
    let mel_hi = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let n_bins = n_fft / 2 + 1;
    let bin_hz = sample_rate as f64 / n_fft as f64;
    let mut bank = vec![vec![0.0; n_bins]; n_mels];
    for m in 0..n_mels {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for (k, w) in bank[m].iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            if f > lo && f < hi {
                *w = if f <= center {
                    (f - lo) / (center - lo)
                } else {
                    (hi - f) / (hi - center)
                };
            }
        }
    }
    bank
}

/// Center frequency (Hz) of each mel filter, for tests that locate tones.
pub fn mel_centers(n_mels: usize, sample_rate: u32) -> Vec<f64> {
    let nyquist = sample_rate as f64 / 2.0;
    let mel_lo = hz_to_mel(20.0);
    let mel_hi = hz_to_mel(nyquist);
    (1..=n_mels)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// Periodic Hann window of length `n`.
fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Extract log-mel filterbank features. Frames are Hann-windowed, padded to
/// the next power of two, and the mel-filtered power spectrum is floored at
/// 1e-10 before the natural log.
pub fn log_mel<F: Scalar>(w: &Waveform<F>, cfg: &FeatureConfig) -> Result<FeatureMatrix<F>> {
    cfg.validate()?;
    if w.sample_rate != cfg.sample_rate {
        return Err(Error::Features(format!(
            "waveform sample rate {} does not match config {}",
            w.sample_rate, cfg.sample_rate
        )));
    }
    let window = cfg.window_samples();
    let hop = cfg.hop_samples();
    let n = w.samples.len();
    let t = frame_count(n, window, hop).ok_or_else(|| {
        Error::Features(format!(
            "audio too short: {n} samples < one {window}-sample window"
        ))
    })?;

    let n_fft = window.next_power_of_two();
    let win = hann(window);
    let bank = mel_filterbank(cfg.n_mels, n_fft, cfg.sample_rate);
    let n_bins = n_fft / 2 + 1;

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut power = vec![0.0f64; n_bins];
    let mut out = Vec::with_capacity(t * cfg.n_mels);

    for frame in 0..t {
        let start = frame * hop;
        for i in 0..n_fft {
            let s = if i < window {
                w.samples[start + i].to_f64_lossy() * win[i]
            } else {
                0.0
            };
            buf[i] = Complex::new(s, 0.0);
        }
        fft.process(&mut buf);
        for (k, p) in power.iter_mut().enumerate() {
            *p = buf[k].norm_sqr();
        }
        for filt in &bank {
            let e: f64 = filt.iter().zip(&power).map(|(w, p)| w * p).sum();
            out.push(F::from_f64(e.max(1e-10).ln()));
        }
    }
    Ok(FeatureMatrix::from_rows(t, cfg.n_mels, out))
}

/// Per-utterance cepstral mean/variance normalization: every column to mean
/// 0 and population variance 1. Zero-variance columns are shifted only,
/// which leaves them all-zero.
pub fn cmvn<F: Scalar>(f: &FeatureMatrix<F>) -> FeatureMatrix<F> {
    let (t, cols) = (f.num_frames(), f.num_features());
    let tf = F::from_f64(t as f64);
    let mut out = f.data().to_vec();
    for j in 0..cols {
        let mut mean = F::zero();
        for i in 0..t {
            mean += f.get(i, j);
        }
        mean /= tf;
        let mut var = F::zero();
        for i in 0..t {
            let d = f.get(i, j) - mean;
            var += d * d;
        }
        var /= tf;
        let inv = if var > F::zero() {
            var.sqrt().recip()
        } else {
            F::one()
        };
        for i in 0..t {
            out[i * cols + j] = (f.get(i, j) - mean) * inv;
        }
    }
    FeatureMatrix::from_rows(t, cols, out)
}

// ---- binary feature files ----

const FEAT_MAGIC: &[u8; 4] = b"FEAT";

/// Write a feature matrix: magic "FEAT", u32 t, u32 f (little-endian), then
/// t*f float32 values row-major.
pub fn write_features<F: Scalar>(path: &Path, m: &FeatureMatrix<F>) -> Result<()> {
    let mut out = Vec::with_capacity(12 + m.data().len() * 4);
    out.extend_from_slice(FEAT_MAGIC);
    out.extend_from_slice(&(m.num_frames() as u32).to_le_bytes());
    out.extend_from_slice(&(m.num_features() as u32).to_le_bytes());
    for v in m.data() {
        out.extend_from_slice(&v.to_f32_lossy().to_le_bytes());
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

/// Read a feature matrix written by [`write_features`].
pub fn read_features<F: Scalar>(path: &Path) -> Result<FeatureMatrix<F>> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .map_err(|e| Error::Features(format!("cannot open {}: {e}", path.display())))?
        .read_to_end(&mut bytes)?;
    if bytes.len() < 12 || &bytes[0..4] != FEAT_MAGIC {
        return Err(Error::Features(format!("{}: not a FEAT file", path.display())));
    }
    let t = read_u32(&bytes, 4).unwrap() as usize;
    let f = read_u32(&bytes, 8).unwrap() as usize;
    let need = 12 + t * f * 4;
    if bytes.len() != need {
        return Err(Error::Features(format!(
            "{}: expected {need} bytes for {t}x{f}, found {}",
            path.display(),
            bytes.len()
        )));
    }
    let data = bytes[12..]
        .chunks_exact(4)
        .map(|c| F::from_f64(f32::from_le_bytes(c.try_into().unwrap()) as f64))
        .collect();
    Ok(FeatureMatrix::from_rows(t, f, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_formula() {
        assert_eq!(frame_count(16_000, 400, 160), Some(98));
        assert_eq!(frame_count(400, 400, 160), Some(1));
        assert_eq!(frame_count(399, 400, 160), None);
    }

    #[test]
    fn cmvn_constant_matrix_goes_to_zero() {
        let m = FeatureMatrix::from_rows(3, 2, vec![4.0f64; 6]);
        let n = cmvn(&m);
        assert!(n.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn cmvn_two_point_column() {
        let m = FeatureMatrix::from_rows(2, 1, vec![1.0f64, 3.0]);
        let n = cmvn(&m);
        assert!((n.get(0, 0) + 1.0).abs() < 1e-12);
        assert!((n.get(1, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cmvn_idempotent() {
        let data: Vec<f64> = (0..40).map(|i| ((i * 37 % 17) as f64) * 0.25 - 1.0).collect();
        let m = FeatureMatrix::from_rows(8, 5, data);
        let once = cmvn(&m);
        let twice = cmvn(&once);
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn mel_filterbank_covers_all_filters() {
        let bank = mel_filterbank(80, 512, 16_000);
        assert_eq!(bank.len(), 80);
        for row in &bank {
            assert!(row.iter().any(|w| *w > 0.0), "every filter must touch a bin");
        }
    }
}
