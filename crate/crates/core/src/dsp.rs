//! STFT magnitudes, HTK mel filterbanks and the spectral losses built on them.
//!
//! Framing is centred with reflect padding of `n_fft / 2` on both sides and a
//! periodic Hann window, giving `1 + L / hop` frames of `n_fft / 2 + 1` bins.
//! Value-level transforms run through `rustfft`; the tape variants multiply by
//! explicit DFT matrices so they can be differentiated.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradcore::{NodeId, Tape};
use crate::linalg::Matrix;

/// Mel front-end parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MelConfig {
    pub sample_rate: f64,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16000.0,
            n_fft: 512,
            hop: 128,
            n_mels: 40,
            f_min: 0.0,
            f_max: 8000.0,
        }
    }
}

impl MelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.sample_rate > 0.0) || !self.sample_rate.is_finite() {
            return bad(format!("sample_rate must be positive, got {}", self.sample_rate));
        }
        if !self.n_fft.is_power_of_two() || self.n_fft < 2 {
            return bad(format!("n_fft must be a power of two ≥ 2, got {}", self.n_fft));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return bad(format!("hop must be in 1..={}, got {}", self.n_fft, self.hop));
        }
        if self.n_mels == 0 {
            return bad("n_mels must be positive".into());
        }
        if !(0.0 <= self.f_min && self.f_min < self.f_max && self.f_max <= self.sample_rate / 2.0) {
            return bad(format!(
                "need 0 ≤ f_min < f_max ≤ sample_rate/2, got f_min={} f_max={}",
                self.f_min, self.f_max
            ));
        }
        Ok(())
    }

    pub fn num_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }
}

/// Default resolutions `(n_fft, hop)` of the multi-resolution spectral loss.
pub const DEFAULT_STFT_RESOLUTIONS: [(usize, usize); 3] = [(256, 64), (512, 128), (1024, 256)];

/// HTK mel scale `2595 · log10(1 + f / 700)`.
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Periodic Hann window `0.5 − 0.5 cos(2πn / N)`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

fn check_framing(len: usize, n_fft: usize, hop: usize) -> Result<()> {
    if n_fft < 2 {
        return Err(Error::InvalidConfig(format!("n_fft must be ≥ 2, got {n_fft}")));
    }
    if hop == 0 || hop > n_fft {
        return Err(Error::InvalidConfig(format!("hop must be in 1..={n_fft}, got {hop}")));
    }
    if len < n_fft {
        return Err(Error::InsufficientData(format!(
            "waveform of {len} samples is shorter than n_fft = {n_fft}"
        )));
    }
    Ok(())
}

/// Source sample index of every frame entry (row-major, `frames × n_fft`) and
/// the frame count, for centred reflect-padded framing.
pub fn frame_indices(len: usize, n_fft: usize, hop: usize) -> Result<(Vec<usize>, usize)> {
    check_framing(len, n_fft, hop)?;
    let pad = n_fft / 2;
    let frames = 1 + len / hop;
    let mut index = Vec::with_capacity(frames * n_fft);
    for f in 0..frames {
        for k in 0..n_fft {
            let q = (f * hop + k) as isize - pad as isize;
            let last = len as isize - 1;
            let src = if q < 0 {
                -q
            } else if q > last {
                2 * last - q
            } else {
                q
            };
            index.push(src as usize);
        }
    }
    Ok((index, frames))
}

/// `|STFT|` as a `bins × frames` matrix.
pub fn stft_magnitude(wave: &[f64], n_fft: usize, hop: usize) -> Result<Matrix> {
    if wave.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("waveform"));
    }
    let (index, frames) = frame_indices(wave.len(), n_fft, hop)?;
    let window = hann_window(n_fft);
    let bins = n_fft / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    let mut out = Matrix::zeros(bins, frames);
    for f in 0..frames {
        for (k, slot) in buf.iter_mut().enumerate() {
            *slot = Complex64::new(wave[index[f * n_fft + k]] * window[k], 0.0);
        }
        fft.process(&mut buf);
        for b in 0..bins {
            out[(b, f)] = buf[b].norm();
        }
    }
    Ok(out)
}

/// Triangular HTK filters with unit peak, `n_mels × (n_fft/2 + 1)`.
pub fn mel_filterbank(cfg: &MelConfig) -> Result<Matrix> {
    cfg.validate()?;
    let bins = cfg.num_bins();
    let (lo, hi) = (hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max));
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let mut fb = Matrix::zeros(cfg.n_mels, bins);
    for m in 0..cfg.n_mels {
        let (left, centre, right) = (edges[m], edges[m + 1], edges[m + 2]);
        for b in 0..bins {
            let f = b as f64 * cfg.sample_rate / cfg.n_fft as f64;
            let up = (f - left) / (centre - left);
            let down = (right - f) / (right - centre);
            fb[(m, b)] = up.min(down).max(0.0);
        }
        if fb.row(m).iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidConfig(format!(
                "mel filter {m} covers no FFT bin; reduce n_mels or raise n_fft"
            )));
        }
    }
    Ok(fb)
}

/// Mel magnitudes `filterbank · |STFT|` (`n_mels × frames`).
pub fn mel_spectrogram(wave: &[f64], cfg: &MelConfig) -> Result<Matrix> {
    let fb = mel_filterbank(cfg)?;
    Ok(&fb * stft_magnitude(wave, cfg.n_fft, cfg.hop)?)
}

/// Mean squared difference of mel magnitudes.
pub fn mel_l2_loss(a: &[f64], b: &[f64], cfg: &MelConfig) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "mel_l2_loss waveform length",
            expected: a.len(),
            got: b.len(),
        });
    }
    let fb = mel_filterbank(cfg)?;
    let ma = &fb * stft_magnitude(a, cfg.n_fft, cfg.hop)?;
    let mb = &fb * stft_magnitude(b, cfg.n_fft, cfg.hop)?;
    Ok((ma - mb).map(|d| d * d).mean())
}

/// Windowed DFT matrices (`n_fft × bins`) for the real and imaginary parts.
fn dft_matrices(n_fft: usize) -> (Matrix, Matrix) {
    let window = hann_window(n_fft);
    let bins = n_fft / 2 + 1;
    let angle = |n: usize, k: usize| 2.0 * PI * ((n * k) % n_fft) as f64 / n_fft as f64;
    let re = Matrix::from_fn(n_fft, bins, |n, k| window[n] * angle(n, k).cos());
    let im = Matrix::from_fn(n_fft, bins, |n, k| -window[n] * angle(n, k).sin());
    (re, im)
}

/// Differentiable `|STFT|` of a `1 × L` node, laid out `frames × bins`.
pub fn stft_magnitude_tape(tape: &mut Tape, wave: NodeId, n_fft: usize, hop: usize) -> Result<NodeId> {
    let frames = tape.frame(wave, n_fft, hop)?;
    let (re_m, im_m) = dft_matrices(n_fft);
    let re_c = tape.constant(re_m);
    let im_c = tape.constant(im_m);
    let re = tape.matmul(frames, re_c)?;
    let im = tape.matmul(frames, im_c)?;
    let re2 = tape.square(re)?;
    let im2 = tape.square(im)?;
    let power = tape.add(re2, im2)?;
    tape.sqrt(power)
}

/// Differentiable mel magnitudes of a `1 × L` node, `frames × n_mels`.
pub fn mel_spectrogram_tape(tape: &mut Tape, wave: NodeId, cfg: &MelConfig) -> Result<NodeId> {
    let fb = tape.constant(mel_filterbank(cfg)?.transpose());
    let mag = stft_magnitude_tape(tape, wave, cfg.n_fft, cfg.hop)?;
    tape.matmul(mag, fb)
}

/// Differentiable [`mel_l2_loss`] between two `1 × L` nodes.
pub fn mel_l2_loss_tape(tape: &mut Tape, a: NodeId, b: NodeId, cfg: &MelConfig) -> Result<NodeId> {
    let ma = mel_spectrogram_tape(tape, a, cfg)?;
    let mb = mel_spectrogram_tape(tape, b, cfg)?;
    let d = tape.sub(ma, mb)?;
    let sq = tape.square(d)?;
    tape.mean(sq)
}
