use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{all_finite, nearest_row, to_row_major, Matrix};

/// One stage's code vectors plus the usage statistics that drive dead-code refresh.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    stage_index: usize,
    vectors: Matrix,
    usage_counts: Vec<u64>,
    idle_steps: Vec<u32>,
}

impl Codebook {
    /// `vectors` is `K × dim`; `stage_index` is 1-based.
    pub fn new(stage_index: usize, vectors: Matrix) -> Result<Self> {
        if stage_index == 0 {
            return Err(Error::InvalidConfig("stage_index is 1-based".into()));
        }
        if vectors.nrows() == 0 {
            return Err(Error::InvalidConfig(format!("codebook for stage {stage_index} is empty")));
        }
        if vectors.ncols() == 0 {
            return Err(Error::InvalidConfig("codebook dimension must be positive".into()));
        }
        if !all_finite(&vectors) {
            return Err(Error::NonFinite("codebook vectors"));
        }
        let k = vectors.nrows();
        Ok(Self {
            stage_index,
            vectors,
            usage_counts: vec![0; k],
            idle_steps: vec![0; k],
        })
    }

    pub fn stage_index(&self) -> usize {
        self.stage_index
    }

    pub fn size(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    /// Replaces the code vectors wholesale (same shape, finite).
    pub fn set_vectors(&mut self, vectors: Matrix) -> Result<()> {
        if vectors.shape() != self.vectors.shape() {
            return Err(Error::DimensionMismatch {
                context: "codebook update",
                expected: self.vectors.len(),
                got: vectors.len(),
            });
        }
        if !all_finite(&vectors) {
            return Err(Error::NonFinite("codebook vectors"));
        }
        self.vectors = vectors;
        Ok(())
    }

    pub fn code(&self, index: usize) -> Result<Vec<f64>> {
        if index >= self.size() {
            return Err(Error::CodeOutOfRange {
                stage: self.stage_index,
                index,
                size: self.size(),
            });
        }
        Ok((0..self.dim()).map(|c| self.vectors[(index, c)]).collect())
    }

    pub fn usage_counts(&self) -> &[u64] {
        &self.usage_counts
    }

    /// Consecutive recorded steps in which each code went unused.
    pub fn idle_steps(&self) -> &[u32] {
        &self.idle_steps
    }

    /// Nearest code for every row of `queries` (`M × dim`).
    pub fn assign(&self, queries: &Matrix) -> Result<Vec<usize>> {
        if queries.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "codebook lookup",
                expected: self.dim(),
                got: queries.ncols(),
            });
        }
        let dim = self.dim();
        let codes = to_row_major(&self.vectors);
        let rows = to_row_major(queries);
        Ok(rows
            .chunks_exact(dim)
            .map(|q| argmin_code(q, &codes, dim))
            .collect())
    }

    /// Records one optimizer step's worth of assignments.
    pub fn record_usage(&mut self, codes: &[usize]) -> Result<()> {
        let mut used = vec![false; self.size()];
        for &c in codes {
            if c >= self.size() {
                return Err(Error::CodeOutOfRange {
                    stage: self.stage_index,
                    index: c,
                    size: self.size(),
                });
            }
            used[c] = true;
            self.usage_counts[c] += 1;
        }
        for (idle, u) in self.idle_steps.iter_mut().zip(used) {
            *idle = if u { 0 } else { idle.saturating_add(1) };
        }
        Ok(())
    }

    /// Codes idle for at least `threshold` recorded steps.
    pub fn dead_codes(&self, threshold: u32) -> Vec<usize> {
        self.idle_steps
            .iter()
            .enumerate()
            .filter(|(_, &idle)| idle >= threshold)
            .map(|(k, _)| k)
            .collect()
    }

    /// Replaces dead codes with rows drawn uniformly from `batch`.
    /// Returns the replaced indices. Usage counts restart from zero.
    pub fn refresh_dead_codes<R: Rng>(
        &mut self,
        batch: &Matrix,
        threshold: u32,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        if threshold == 0 {
            return Err(Error::InvalidConfig("refresh threshold must be >= 1".into()));
        }
        if batch.nrows() == 0 {
            return Err(Error::InsufficientData("dead-code refresh needs a non-empty batch".into()));
        }
        if batch.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "dead-code refresh batch",
                expected: self.dim(),
                got: batch.ncols(),
            });
        }
        if !all_finite(batch) {
            return Err(Error::NonFinite("dead-code refresh batch"));
        }
        let dead = self.dead_codes(threshold);
        for &k in &dead {
            let row = rng.random_range(0..batch.nrows());
            for c in 0..self.dim() {
                self.vectors[(k, c)] = batch[(row, c)];
            }
            self.idle_steps[k] = 0;
        }
        self.usage_counts.iter_mut().for_each(|u| *u = 0);
        Ok(dead)
    }
}

fn argmin_code(query: &[f64], codes: &[f64], dim: usize) -> usize {
    debug_assert_eq!(query.len(), dim);
    nearest_row(codes, query)
}

/// Nearest code by squared Euclidean distance; ties go to the lowest index.
pub fn nearest_code(v: &[f64], cb: &Codebook) -> Result<(usize, Vec<f64>)> {
    if v.len() != cb.dim() {
        return Err(Error::DimensionMismatch {
            context: "nearest_code",
            expected: cb.dim(),
            got: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("nearest_code query"));
    }
    let codes = to_row_major(cb.vectors());
    let k = argmin_code(v, &codes, cb.dim());
    Ok((k, codes[k * cb.dim()..(k + 1) * cb.dim()].to_vec()))
}

/// Functional form of [`Codebook::refresh_dead_codes`] with a seeded ChaCha8 stream.
pub fn refresh_dead_codes(
    cb: &Codebook,
    recent_batch: &Matrix,
    threshold: u32,
    seed: u64,
) -> Result<Codebook> {
    let mut out = cb.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    out.refresh_dead_codes(recent_batch, threshold, &mut rng)?;
    Ok(out)
}

/// `exp(H)` of the empirical code distribution.
pub fn code_perplexity(codes: &[usize], size: usize) -> f64 {
    if codes.is_empty() || size == 0 {
        return 0.0;
    }
    let mut counts = vec![0usize; size];
    for &c in codes {
        if c < size {
            counts[c] += 1;
        }
    }
    let n = codes.len() as f64;
    let entropy: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    entropy.exp()
}
