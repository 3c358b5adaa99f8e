use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg::{affine_rows, all_finite, Matrix};

/// Shared in/out projections used by every stage.
///
/// `in_weight` is `latent_dim × full_dim`, `out_weight` is `full_dim × latent_dim`;
/// both act on row vectors (`r · W + b`).
#[derive(Clone, Debug, PartialEq)]
pub struct Projections {
    pub in_weight: Matrix,
    pub in_bias: Vec<f64>,
    pub out_weight: Matrix,
    pub out_bias: Vec<f64>,
}

impl Projections {
    /// Rectangular identity in both directions, zero biases.
    pub fn identity(latent_dim: usize, full_dim: usize) -> Self {
        Self {
            in_weight: Matrix::identity(latent_dim, full_dim),
            in_bias: vec![0.0; full_dim],
            out_weight: Matrix::identity(full_dim, latent_dim),
            out_bias: vec![0.0; latent_dim],
        }
    }

    /// Gaussian weights with variance `1 / fan_in`, zero biases.
    pub fn random<R: Rng>(latent_dim: usize, full_dim: usize, rng: &mut R) -> Self {
        let n_in = Normal::new(0.0, 1.0 / (latent_dim as f64).sqrt()).expect("valid std");
        let n_out = Normal::new(0.0, 1.0 / (full_dim as f64).sqrt()).expect("valid std");
        let in_weight = Matrix::from_fn(latent_dim, full_dim, |_, _| n_in.sample(rng));
        let out_weight = Matrix::from_fn(full_dim, latent_dim, |_, _| n_out.sample(rng));
        Self {
            in_weight,
            in_bias: vec![0.0; full_dim],
            out_weight,
            out_bias: vec![0.0; latent_dim],
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.in_weight.nrows()
    }

    pub fn full_dim(&self) -> usize {
        self.in_weight.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (latent, full) = (self.latent_dim(), self.full_dim());
        let mismatch = |context, expected, got| Err(Error::DimensionMismatch { context, expected, got });
        if self.in_bias.len() != full {
            return mismatch("proj_in bias", full, self.in_bias.len());
        }
        if self.out_weight.nrows() != full {
            return mismatch("proj_out rows", full, self.out_weight.nrows());
        }
        if self.out_weight.ncols() != latent {
            return mismatch("proj_out cols", latent, self.out_weight.ncols());
        }
        if self.out_bias.len() != latent {
            return mismatch("proj_out bias", latent, self.out_bias.len());
        }
        if !all_finite(&self.in_weight)
            || !all_finite(&self.out_weight)
            || self.in_bias.iter().chain(&self.out_bias).any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("projections"));
        }
        Ok(())
    }

    pub fn project_in(&self, residual: &Matrix) -> Result<Matrix> {
        affine_rows(residual, &self.in_weight, &self.in_bias)
    }

    pub fn project_out(&self, padded: &Matrix) -> Result<Matrix> {
        affine_rows(padded, &self.out_weight, &self.out_bias)
    }
}
