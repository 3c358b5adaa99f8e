//! Deterministic two-source generators with known ground truth.
//!
//! All randomness comes from `ChaCha8` ([`RNG_NAME`]), whose streams are
//! portable and bit-exact across platforms.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Identifier of the generator recorded alongside experiment outputs.
pub const RNG_NAME: &str = "chacha8";

/// Clean, noise and their sum for one batch of frames.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoSourceBatch {
    pub clean: Matrix,
    pub noise: Matrix,
    pub mixture: Matrix,
    pub variance_ratio: f64,
    pub seed: u64,
}

/// A fixed low-rank clean subspace plus isotropic noise.
///
/// The loading matrix depends only on the seed given to [`TwoSourceGenerator::new`],
/// so several batches drawn with different sample seeds share the same clean
/// structure. Clean frames have expected total variance 1 and noise frames
/// `1 / variance_ratio`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoSourceGenerator {
    dim: usize,
    rank: usize,
    variance_ratio: f64,
    loading: Matrix,
}

impl TwoSourceGenerator {
    pub fn new(dim: usize, rank: usize, variance_ratio: f64, seed: u64) -> Result<Self> {
        if dim == 0 || rank == 0 || rank > dim {
            return Err(Error::InvalidConfig(format!(
                "need 1 ≤ rank_clean ≤ D, got rank {rank} for D = {dim}"
            )));
        }
        if !(variance_ratio > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "variance_ratio must be positive, got {variance_ratio}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut loading = Matrix::from_fn(rank, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let fro = loading.norm();
        loading /= fro;
        Ok(Self {
            dim,
            rank,
            variance_ratio,
            loading,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn variance_ratio(&self) -> f64 {
        self.variance_ratio
    }

    /// `rank × D` loading with unit Frobenius norm.
    pub fn loading(&self) -> &Matrix {
        &self.loading
    }

    pub fn sample(&self, frames: usize, seed: u64) -> TwoSourceBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let factors = Matrix::from_fn(frames, self.rank, |_, _| rng.sample::<f64, _>(StandardNormal));
        let clean = &factors * &self.loading;
        let noise_std = (1.0 / (self.variance_ratio * self.dim as f64)).sqrt();
        let raw = Matrix::from_fn(frames, self.dim, |_, _| {
            noise_std * rng.sample::<f64, _>(StandardNormal)
        });
        let (noise, mixture) = exact_sum(&clean, raw);
        TwoSourceBatch {
            clean,
            noise,
            mixture,
            variance_ratio: self.variance_ratio,
            seed,
        }
    }
}

/// Adjusts `noise` by at most a few ulps so that both `clean + noise` and
/// `mixture − clean` round to the stored values.
fn exact_sum(clean: &Matrix, mut noise: Matrix) -> (Matrix, Matrix) {
    let mut mixture = Matrix::zeros(clean.nrows(), clean.ncols());
    for ((m, n), &c) in mixture.iter_mut().zip(noise.iter_mut()).zip(clean.iter()) {
        let mut cur = *n;
        let mut sum = c + cur;
        for _ in 0..16 {
            let back = sum - c;
            if back == cur {
                break;
            }
            cur = back;
            sum = c + cur;
        }
        *n = cur;
        *m = sum;
    }
    (noise, mixture)
}

/// One batch from a fresh generator whose loading and samples both derive from `seed`.
pub fn gen_two_source(
    frames: usize,
    dim: usize,
    rank_clean: usize,
    variance_ratio: f64,
    seed: u64,
) -> Result<TwoSourceBatch> {
    Ok(TwoSourceGenerator::new(dim, rank_clean, variance_ratio, seed)?.sample(frames, seed))
}

/// Sum of three random sinusoids and a copy with white Gaussian noise at
/// exactly `snr_db` (by sample power). `snr_db = +∞` yields identical signals.
pub fn gen_noisy_waveform(
    duration_s: f64,
    sample_rate: f64,
    snr_db: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::InvalidConfig(format!("duration must be positive, got {duration_s}")));
    }
    if !(sample_rate > 0.0) || !sample_rate.is_finite() {
        return Err(Error::InvalidConfig(format!("sample_rate must be positive, got {sample_rate}")));
    }
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidConfig(format!("snr_db must be a number < +∞ or +∞, got {snr_db}")));
    }
    let n = (duration_s * sample_rate).round() as usize;
    if n == 0 {
        return Err(Error::InvalidConfig("duration shorter than one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tones: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            let f = rng.random_range(50.0..0.45 * sample_rate);
            let a = rng.random_range(0.1..1.0);
            let phase = rng.random_range(0.0..2.0 * PI);
            (f, a, phase)
        })
        .collect();
    let clean: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate;
            tones.iter().map(|&(f, a, p)| a * (2.0 * PI * f * t + p).sin()).sum()
        })
        .collect();
    if snr_db == f64::INFINITY {
        return Ok((clean.clone(), clean));
    }
    let raw: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let p_clean = power(&clean);
    let p_raw = power(&raw);
    let scale = (p_clean / (p_raw * 10f64.powf(snr_db / 10.0))).sqrt();
    let noisy = clean.iter().zip(&raw).map(|(c, r)| c + scale * r).collect();
    Ok((clean, noisy))
}

/// Mean squared sample value.
pub fn power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// `10 log10(P_clean / P_noise)` with `noise = noisy − clean`.
pub fn measured_snr_db(clean: &[f64], noisy: &[f64]) -> f64 {
    let noise: Vec<f64> = clean.iter().zip(noisy).map(|(c, n)| n - c).collect();
    10.0 * (power(clean) / power(&noise)).log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invalid_parameters() {
        assert!(gen_two_source(10, 4, 0, 4.0, 0).is_err());
        assert!(gen_two_source(10, 4, 5, 4.0, 0).is_err());
        assert!(gen_two_source(10, 4, 2, 0.0, 0).is_err());
        assert!(gen_noisy_waveform(0.0, 16000.0, 10.0, 0).is_err());
    }

    #[test]
    fn infinite_ratio_means_no_noise() {
        let b = gen_two_source(50, 8, 2, f64::INFINITY, 3).unwrap();
        assert_eq!(b.mixture, b.clean);
        let (c, n) = gen_noisy_waveform(0.1, 16000.0, f64::INFINITY, 3).unwrap();
        assert_eq!(c, n);
    }

    #[test]
    fn clean_is_low_rank() {
        let b = gen_two_source(200, 8, 2, 4.0, 11).unwrap();
        let sv = b.clean.clone().svd(false, false).singular_values;
        assert!(sv[2] < 1e-9 * sv[0]);
    }

    #[test]
    fn shared_loading_across_samples() {
        let g = TwoSourceGenerator::new(8, 2, 4.0, 1).unwrap();
        let a = g.sample(20, 5);
        let b = g.sample(20, 6);
        assert_ne!(a.clean, b.clean);
        let stacked = Matrix::from_fn(40, 8, |r, c| if r < 20 { a.clean[(r, c)] } else { b.clean[(r - 20, c)] });
        let sv = stacked.svd(false, false).singular_values;
        assert!(sv[2] < 1e-9 * sv[0]);
    }
}
