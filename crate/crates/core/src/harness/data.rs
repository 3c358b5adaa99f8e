use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::linalg::Matrix;
use crate::synthdata::{gen_noisy_waveform, TwoSourceGenerator};

use super::config::{ExperimentConfig, Mode};

/// Frames of one batch: encoder input and reconstruction target.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub clean: Matrix,
    pub mixture: Matrix,
}

/// Draws training and evaluation batches for an experiment.
#[derive(Clone, Debug)]
pub struct DataSource {
    mode: Mode,
    generator: TwoSourceGenerator,
    input_dim: usize,
    frames_per_item: usize,
    sample_rate: f64,
    snr_db: f64,
    stream: ChaCha8Rng,
}

impl DataSource {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            mode: cfg.mode,
            generator: TwoSourceGenerator::new(
                cfg.input_dim,
                cfg.rank_clean,
                cfg.variance_ratio,
                cfg.seeds.world,
            )?,
            input_dim: cfg.input_dim,
            frames_per_item: cfg.frames_per_item,
            sample_rate: cfg.waveform.sample_rate,
            snr_db: cfg.waveform.snr_db,
            stream: ChaCha8Rng::seed_from_u64(cfg.seeds.data),
        })
    }

    /// Next training batch of `items` items.
    pub fn next_batch(&mut self, items: usize) -> Result<Batch> {
        let seed = self.stream.next_u64();
        self.batch(items, seed)
    }

    /// Deterministic batch of `items` items from `seed`.
    pub fn batch(&self, items: usize, seed: u64) -> Result<Batch> {
        match self.mode {
            Mode::Latent => {
                let b = self.generator.sample(items * self.frames_per_item, seed);
                Ok(Batch {
                    clean: b.clean,
                    mixture: b.mixture,
                })
            }
            Mode::Waveform => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let rows = items * self.frames_per_item;
                let mut clean = Matrix::zeros(rows, self.input_dim);
                let mut mixture = Matrix::zeros(rows, self.input_dim);
                let duration = (self.frames_per_item * self.input_dim) as f64 / self.sample_rate;
                for item in 0..items {
                    let (c, n) = gen_noisy_waveform(duration, self.sample_rate, self.snr_db, rng.next_u64())?;
                    for f in 0..self.frames_per_item {
                        for k in 0..self.input_dim {
                            let s = f * self.input_dim + k;
                            clean[(item * self.frames_per_item + f, k)] = c[s];
                            mixture[(item * self.frames_per_item + f, k)] = n[s];
                        }
                    }
                }
                Ok(Batch { clean, mixture })
            }
        }
    }

    /// Held-out batch with at least `frames` frames (exactly `frames` in latent mode).
    pub fn eval_batch(&self, frames: usize, seed: u64) -> Result<Batch> {
        match self.mode {
            Mode::Latent => {
                let b = self.generator.sample(frames, seed);
                Ok(Batch {
                    clean: b.clean,
                    mixture: b.mixture,
                })
            }
            Mode::Waveform => self.batch(frames.div_ceil(self.frames_per_item), seed),
        }
    }
}
