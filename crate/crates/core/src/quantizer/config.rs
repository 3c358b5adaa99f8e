use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which accumulation/masking rule a quantizer follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantizerKind {
    /// Every stage sees all `full_dim` coordinates; all stages are summed.
    Rvq,
    /// Stage `i` sees the first `d_i` coordinates; only the enhanced stages are summed.
    VoRvq,
}

/// Structural hyperparameters of a (VO-)RVQ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoRvqConfig {
    pub num_stages: usize,
    pub enhanced_stages: usize,
    pub noise_stages: usize,
    pub latent_dim: usize,
    pub full_dim: usize,
    /// Kept dimensions per stage, non-decreasing and ending at `full_dim`.
    pub stage_dims: Vec<usize>,
    pub codebook_sizes: Vec<usize>,
    pub seed: u64,
}

/// `d_i = ceil(i * full_dim / n)` for `i = 1..=n`.
pub fn linear_schedule(full_dim: usize, n: usize) -> Vec<usize> {
    (1..=n).map(|i| (i * full_dim).div_ceil(n)).collect()
}

impl VoRvqConfig {
    /// Linear schedule, one codebook size for every stage.
    pub fn new(
        num_stages: usize,
        enhanced_stages: usize,
        latent_dim: usize,
        full_dim: usize,
        codebook_size: usize,
        seed: u64,
    ) -> Result<Self> {
        if enhanced_stages > num_stages {
            return Err(Error::InvalidConfig(format!(
                "enhanced_stages {enhanced_stages} exceeds num_stages {num_stages}"
            )));
        }
        let cfg = Self {
            num_stages,
            enhanced_stages,
            noise_stages: num_stages - enhanced_stages,
            latent_dim,
            full_dim,
            stage_dims: linear_schedule(full_dim, num_stages),
            codebook_sizes: vec![codebook_size; num_stages],
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Same structure with every stage unmasked, as used by plain RVQ.
    pub fn unmasked(&self) -> Self {
        Self {
            stage_dims: vec![self.full_dim; self.num_stages],
            ..self.clone()
        }
    }

    /// Effective per-stage dimensions for the given quantizer kind.
    pub fn dims_for(&self, kind: QuantizerKind) -> Vec<usize> {
        match kind {
            QuantizerKind::VoRvq => self.stage_dims.clone(),
            QuantizerKind::Rvq => vec![self.full_dim; self.num_stages],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.enhanced_stages + self.noise_stages != self.num_stages {
            return bad(format!(
                "enhanced_stages ({}) + noise_stages ({}) != num_stages ({})",
                self.enhanced_stages, self.noise_stages, self.num_stages
            ));
        }
        if self.latent_dim == 0 || self.full_dim == 0 {
            return bad("latent_dim and full_dim must be positive".into());
        }
        if self.stage_dims.len() != self.num_stages {
            return bad(format!(
                "stage_dims has {} entries for {} stages",
                self.stage_dims.len(),
                self.num_stages
            ));
        }
        if self.codebook_sizes.len() != self.num_stages {
            return bad(format!(
                "codebook_sizes has {} entries for {} stages",
                self.codebook_sizes.len(),
                self.num_stages
            ));
        }
        if self.stage_dims.iter().any(|&d| d == 0) {
            return bad("stage_dims must be strictly positive".into());
        }
        if self.stage_dims.windows(2).any(|w| w[0] > w[1]) {
            return bad(format!("stage_dims {:?} is not non-decreasing", self.stage_dims));
        }
        if let Some(&last) = self.stage_dims.last() {
            if last != self.full_dim {
                return bad(format!(
                    "last stage dim {last} must equal full_dim {}",
                    self.full_dim
                ));
            }
        }
        if self.codebook_sizes.iter().any(|&k| k == 0) {
            return bad("every codebook needs at least one code".into());
        }
        Ok(())
    }
}
