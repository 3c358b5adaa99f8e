use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg::{affine_rows, Matrix};
use crate::losses::SyntheticTeacher;
use crate::quantizer::{
    kmeans_pp_init, Codebook, LatentSequence, Projections, QuantizationTrace, Quantizer,
};

use super::config::{ExperimentConfig, Variant};

/// `x · weight + bias` on row vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl AffineMap {
    /// Gaussian weights with variance `1 / fan_in`, zero bias.
    pub fn random(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let n = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("valid std");
        Self {
            weight: Matrix::from_fn(fan_in, fan_out, |_, _| n.sample(rng)),
            bias: vec![0.0; fan_out],
        }
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        affine_rows(x, &self.weight, &self.bias)
    }
}

/// Toy encoder, optional quantizer, decoder, alignment head and frozen teacher.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub variant: Variant,
    pub encoder: AffineMap,
    pub decoder: AffineMap,
    pub align: AffineMap,
    pub teacher: SyntheticTeacher,
    /// Always present so the bundle format can hold it; unused by the
    /// continuous variant, which carries zero codebooks.
    pub quantizer: Quantizer,
}

/// Everything a forward pass produces for evaluation.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub y_c: Matrix,
    pub trace: Option<QuantizationTrace>,
    pub y_q: Matrix,
    pub decoded: Matrix,
}

impl Model {
    /// Fresh model; codebooks start empty and are seeded by
    /// [`Model::init_codebooks`] from the first batch.
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seeds.model);
        let encoder = AffineMap::random(cfg.input_dim, cfg.latent_dim, &mut rng);
        let decoder = AffineMap::random(cfg.latent_dim, cfg.input_dim, &mut rng);
        let align = AffineMap::random(cfg.latent_dim, cfg.teacher_dim, &mut rng);
        let teacher = SyntheticTeacher::new(cfg.input_dim, cfg.teacher_dim, cfg.seeds.teacher)?;
        let kind = cfg.quantizer.kind().unwrap_or(crate::quantizer::QuantizerKind::VoRvq);
        let mut qcfg = cfg.vorvq.clone();
        if cfg.quantizer == Variant::Continuous {
            qcfg.num_stages = 0;
            qcfg.enhanced_stages = 0;
            qcfg.noise_stages = 0;
            qcfg.stage_dims.clear();
            qcfg.codebook_sizes.clear();
        }
        Ok(Self {
            variant: cfg.quantizer,
            encoder,
            decoder,
            align,
            teacher,
            quantizer: Quantizer {
                kind,
                config: qcfg,
                projections: Projections::identity(cfg.latent_dim, cfg.vorvq.full_dim),
                codebooks: Vec::new(),
            },
        })
    }

    pub fn is_quantized(&self) -> bool {
        self.variant != Variant::Continuous
    }

    pub fn codebooks_ready(&self) -> bool {
        self.quantizer.codebooks.len() == self.quantizer.config.num_stages
    }

    /// k-means++ seeding of every stage on the projected residuals of `mixture`.
    pub fn init_codebooks(&mut self, mixture: &Matrix, seed: u64) -> Result<()> {
        let q = &mut self.quantizer;
        let dims = q.stage_dims();
        let full = q.config.full_dim;
        let mut seeds = ChaCha8Rng::seed_from_u64(seed);
        let mut residual = self.encoder.apply(mixture)?;
        q.codebooks.clear();
        for (i, (&d, &k)) in dims.iter().zip(&q.config.codebook_sizes).enumerate() {
            let z = q.projections.project_in(&residual)?;
            let zc = z.columns(0, d).into_owned();
            let cb = Codebook::new(i + 1, kmeans_pp_init(&zc, k, seeds.next_u64())?)?;
            let codes = cb.assign(&zc)?;
            let mut padded = Matrix::zeros(zc.nrows(), full);
            for (r, &c) in codes.iter().enumerate() {
                for j in 0..d {
                    padded[(r, j)] = cb.vectors()[(c, j)];
                }
            }
            residual -= q.projections.project_out(&padded)?;
            q.codebooks.push(cb);
        }
        Ok(())
    }

    pub fn forward(&self, mixture: &Matrix) -> Result<ForwardOutput> {
        let y_c = self.encoder.apply(mixture)?;
        let (y_q, trace) = if self.is_quantized() {
            if !self.codebooks_ready() {
                return Err(Error::InvalidConfig("codebooks have not been initialized".into()));
            }
            let (y_q, trace) = self.quantizer.forward(&LatentSequence::from_frames(y_c.clone())?)?;
            (y_q.frames, Some(trace))
        } else {
            (y_c.clone(), None)
        };
        let decoded = self.decoder.apply(&y_q)?;
        Ok(ForwardOutput {
            y_c,
            trace,
            y_q,
            decoded,
        })
    }
}
