//! Training objectives: the order-inducing quantizer objective, semantic
//! alignment against a frozen teacher, InfoNCE and the weighted total.
//!
//! Every loss comes in two flavours: a plain function on matrices and a
//! `*_tape` builder that records the same computation on a [`Tape`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dsp::{mel_l2_loss, stft_magnitude, MelConfig};
use crate::error::{Error, Result};
use crate::gradcore::{log_sum_exp, NodeId, Tape};
use crate::linalg::{affine_rows, all_finite, Matrix};
use crate::quantizer::QuantizationTrace;

/// Weights of the total objective and the hyperparameters of its terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_ord: f64,
    pub lambda_stft: f64,
    pub lambda_adv: f64,
    pub lambda_align: f64,
    /// Weight of the semantic L2 term inside the alignment group.
    pub alpha: f64,
    /// Commitment weight.
    pub beta: f64,
    /// InfoNCE temperature.
    pub tau: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_ord: 1.0,
            lambda_stft: 1.0,
            lambda_adv: 0.0,
            lambda_align: 1.0,
            alpha: 1.0,
            beta: 0.25,
            tau: 0.07,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("lambda_ord", self.lambda_ord),
            ("lambda_stft", self.lambda_stft),
            ("lambda_adv", self.lambda_adv),
            ("lambda_align", self.lambda_align),
            ("alpha", self.alpha),
            ("beta", self.beta),
        ];
        for (name, v) in named {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(format!("{name} must be finite and ≥ 0, got {v}")));
            }
        }
        if !self.tau.is_finite() || self.tau <= 0.0 {
            return Err(Error::InvalidConfig(format!("tau must be positive, got {}", self.tau)));
        }
        Ok(())
    }
}

/// Scalar loss terms fed to [`total_loss`]. `adv` is only required when its
/// weight is non-zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub ord: f64,
    pub stft: f64,
    pub adv: Option<f64>,
    pub nce: f64,
    pub sem: f64,
}

/// `λ_ord L_ord + λ_stft L_stft + λ_adv L_adv + λ_align (L_nce + α L_sem)`.
pub fn total_loss(c: &LossComponents, w: &LossWeights) -> Result<f64> {
    w.validate()?;
    let adv = match (c.adv, w.lambda_adv) {
        (_, l) if l == 0.0 => 0.0,
        (Some(v), _) => v,
        (None, _) => {
            return Err(Error::InvalidConfig(
                "lambda_adv > 0 but no adversarial loss was supplied".into(),
            ))
        }
    };
    for (name, v) in [("ord", c.ord), ("stft", c.stft), ("nce", c.nce), ("sem", c.sem), ("adv", adv)] {
        if !v.is_finite() {
            return Err(Error::InvalidConfig(format!("loss component {name} is not finite")));
        }
    }
    Ok(w.lambda_ord * c.ord
        + w.lambda_stft * c.stft
        + w.lambda_adv * adv
        + w.lambda_align * (c.nce + w.alpha * c.sem))
}

/// The three parts of the order-inducing objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrderedTerms {
    pub recon: f64,
    /// `Σ_i ‖sg[ẑ_c,i] − ẑ_q,i‖²`, averaged over frames.
    pub codebook: f64,
    /// `Σ_i ‖ẑ_c,i − sg[ẑ_q,i]‖²`, averaged over frames (before `β`).
    pub commitment: f64,
}

impl OrderedTerms {
    pub fn total(&self, beta: f64) -> f64 {
        self.recon + self.codebook + beta * self.commitment
    }
}

/// Mean over frames of the squared row distance.
pub fn frame_l2(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            context: "frame_l2 shape",
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    Ok((a - b).map(|d| d * d).sum() / a.nrows() as f64)
}

fn quantization_terms(trace: &QuantizationTrace) -> Result<(f64, f64)> {
    let mut sq = 0.0;
    for s in &trace.stages {
        sq += frame_l2(&s.zc_hat, &s.zq_hat)?;
    }
    Ok((sq, sq))
}

/// Latent mode: frame L2 between decoded and target frames plus the codebook
/// and commitment terms of every stage in `trace`.
pub fn ordered_terms(decoded: &Matrix, target: &Matrix, trace: &QuantizationTrace) -> Result<OrderedTerms> {
    let recon = frame_l2(decoded, target)?;
    let (codebook, commitment) = quantization_terms(trace)?;
    Ok(OrderedTerms {
        recon,
        codebook,
        commitment,
    })
}

pub fn ordered_objective(
    decoded: &Matrix,
    target: &Matrix,
    trace: &QuantizationTrace,
    beta: f64,
) -> Result<f64> {
    Ok(ordered_terms(decoded, target, trace)?.total(beta))
}

/// Waveform mode: the reconstruction term is the mel L2 loss.
pub fn ordered_objective_waveform(
    decoded: &[f64],
    target: &[f64],
    trace: &QuantizationTrace,
    beta: f64,
    mel: &MelConfig,
) -> Result<f64> {
    let recon = mel_l2_loss(decoded, target, mel)?;
    let (codebook, commitment) = quantization_terms(trace)?;
    Ok(OrderedTerms {
        recon,
        codebook,
        commitment,
    }
    .total(beta))
}

/// Each row scaled to unit norm; an all-zero row is an error.
pub fn l2_normalize(features: &Matrix) -> Result<Matrix> {
    let mut out = features.clone();
    for (r, mut row) in out.row_iter_mut().enumerate() {
        let n = row.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::Degenerate(format!("row {r} has norm {n}")));
        }
        row /= n;
    }
    Ok(out)
}

fn check_unit_rows(m: &Matrix, which: &str) -> Result<()> {
    for r in 0..m.nrows() {
        let n = m.row(r).norm();
        if (n - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidConfig(format!(
                "{which} row {r} has norm {n}; rows must be L2-normalized"
            )));
        }
    }
    Ok(())
}

/// `−mean_i log softmax_j(f_fake_i · f_real_j / τ)[i]`.
pub fn infonce(f_fake: &Matrix, f_real: &Matrix, tau: f64) -> Result<f64> {
    if f_fake.shape() != f_real.shape() {
        return Err(Error::DimensionMismatch {
            context: "infonce rows",
            expected: f_fake.nrows(),
            got: f_real.nrows(),
        });
    }
    if f_fake.nrows() == 0 {
        return Err(Error::InsufficientData("infonce needs K ≥ 1".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidConfig(format!("tau must be positive, got {tau}")));
    }
    check_unit_rows(f_fake, "f_fake")?;
    check_unit_rows(f_real, "f_real")?;
    let s = f_fake * f_real.transpose() / tau;
    let k = s.nrows();
    let total: f64 = (0..k)
        .map(|i| log_sum_exp(s.row(i).iter().copied()) - s[(i, i)])
        .sum();
    Ok(total / k as f64)
}

/// Frozen random affine map from clean latents to teacher features.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTeacher {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Teacher features for one batch (`T × D_teacher`).
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherEmbedding {
    pub features: Matrix,
}

impl SyntheticTeacher {
    pub const DEFAULT_DIM: usize = 768;

    pub fn new(latent_dim: usize, teacher_dim: usize, seed: u64) -> Result<Self> {
        if latent_dim == 0 || teacher_dim == 0 {
            return Err(Error::InvalidConfig("teacher dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 1.0 / (latent_dim as f64).sqrt()).expect("valid std");
        let weight = Matrix::from_fn(latent_dim, teacher_dim, |_, _| n.sample(&mut rng));
        let bias = (0..teacher_dim).map(|_| 0.1 * n.sample(&mut rng)).collect();
        Ok(Self { weight, bias })
    }

    pub fn embed(&self, clean: &Matrix) -> Result<TeacherEmbedding> {
        Ok(TeacherEmbedding {
            features: affine_rows(clean, &self.weight, &self.bias)?,
        })
    }
}

/// Mean over frames of `‖y_q W + b − teacher‖²`.
pub fn semantic_l2(y_q: &Matrix, weight: &Matrix, bias: &[f64], teacher: &TeacherEmbedding) -> Result<f64> {
    if y_q.nrows() != teacher.features.nrows() {
        return Err(Error::DimensionMismatch {
            context: "semantic_l2 frame count",
            expected: teacher.features.nrows(),
            got: y_q.nrows(),
        });
    }
    let proj = affine_rows(y_q, weight, bias)?;
    frame_l2(&proj, &teacher.features)
}

/// Mean absolute difference of STFT magnitudes, averaged over resolutions.
pub fn multires_stft_loss(decoded: &[f64], target: &[f64], resolutions: &[(usize, usize)]) -> Result<f64> {
    if resolutions.is_empty() {
        return Err(Error::InvalidConfig("no STFT resolutions given".into()));
    }
    if decoded.len() != target.len() {
        return Err(Error::DimensionMismatch {
            context: "multires_stft_loss waveform length",
            expected: target.len(),
            got: decoded.len(),
        });
    }
    let mut total = 0.0;
    for &(n_fft, hop) in resolutions {
        let a = stft_magnitude(decoded, n_fft, hop)?;
        let b = stft_magnitude(target, n_fft, hop)?;
        total += (a - b).abs().mean();
    }
    Ok(total / resolutions.len() as f64)
}

/// Tape nodes of one quantizer stage: `zc` is the encoder-side masked
/// projection, `zq` the selected code rows gathered from the codebook leaf.
#[derive(Clone, Copy, Debug)]
pub struct StageNodes {
    pub zc: NodeId,
    pub zq: NodeId,
}

/// Mean over frames of the squared row distance between two nodes.
pub fn frame_l2_tape(tape: &mut Tape, a: NodeId, b: NodeId) -> Result<NodeId> {
    let t = tape.value(a).nrows().max(1);
    let d = tape.sub(a, b)?;
    let sq = tape.square(d)?;
    let s = tape.sum(sq)?;
    tape.scale(s, 1.0 / t as f64)
}

/// Codebook plus `β`-weighted commitment terms with stop-gradients placed so
/// the former only reaches `zq` and the latter only reaches `zc`.
pub fn quantization_terms_tape(tape: &mut Tape, stages: &[StageNodes], beta: f64) -> Result<Option<NodeId>> {
    let mut acc: Option<NodeId> = None;
    for s in stages {
        let sg_zc = tape.stop_gradient(s.zc)?;
        let sg_zq = tape.stop_gradient(s.zq)?;
        let cb = frame_l2_tape(tape, sg_zc, s.zq)?;
        let commit = frame_l2_tape(tape, s.zc, sg_zq)?;
        let commit = tape.scale(commit, beta)?;
        let term = tape.add(cb, commit)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, term)?,
            None => term,
        });
    }
    Ok(acc)
}

/// Latent-mode objective on the tape.
pub fn ordered_objective_tape(
    tape: &mut Tape,
    decoded: NodeId,
    target: NodeId,
    stages: &[StageNodes],
    beta: f64,
) -> Result<NodeId> {
    let recon = frame_l2_tape(tape, decoded, target)?;
    match quantization_terms_tape(tape, stages, beta)? {
        Some(q) => tape.add(recon, q),
        None => Ok(recon),
    }
}

/// InfoNCE on already-normalized row nodes.
pub fn infonce_tape(tape: &mut Tape, f_fake: NodeId, f_real: NodeId, tau: f64) -> Result<NodeId> {
    let rt = tape.transpose(f_real)?;
    let s = tape.matmul(f_fake, rt)?;
    infonce_from_scores(tape, s, tau)
}

fn infonce_from_scores(tape: &mut Tape, s: NodeId, tau: f64) -> Result<NodeId> {
    if !(tau > 0.0) {
        return Err(Error::InvalidConfig(format!("tau must be positive, got {tau}")));
    }
    let s = tape.scale(s, 1.0 / tau)?;
    let lse = tape.log_sum_exp_rows(s)?;
    let d = tape.diag(s)?;
    let per_row = tape.sub(lse, d)?;
    tape.mean(per_row)
}

/// Alignment group `(L_nce, L_sem)` for `P = y_aug · w_aug`, where `y_aug`
/// is `[y_q | 1]` and `w_aug` stacks the projection weight over its bias.
///
/// The similarity matrix is formed as `y_aug (w_aug f̂_realᵀ)` with row norms
/// of `P` taken from the Gram matrix `w_aug w_augᵀ`, so the cost scales with
/// the latent width rather than the teacher width. Mathematically identical to
/// `infonce(l2_normalize(P), l2_normalize(teacher))`.
pub fn alignment_terms_tape(
    tape: &mut Tape,
    y_aug: NodeId,
    w_aug: NodeId,
    teacher: &TeacherEmbedding,
    tau: f64,
) -> Result<(NodeId, NodeId)> {
    let real_hat = l2_normalize(&teacher.features)?;
    let real_t = tape.constant(real_hat.transpose());
    let teacher_c = tape.constant(teacher.features.clone());

    let w_t = tape.transpose(w_aug)?;
    let gram = tape.matmul(w_aug, w_t)?;
    let yg = tape.matmul(y_aug, gram)?;
    let prod = tape.mul(yg, y_aug)?;
    let sq_norms = tape.sum_rows(prod)?;
    if tape.value(sq_norms).iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Degenerate("projected embedding row with zero norm".into()));
    }
    let norms = tape.sqrt(sq_norms)?;
    let w_real = tape.matmul(w_aug, real_t)?;
    let raw = tape.matmul(y_aug, w_real)?;
    let s = tape.div_rows(raw, norms)?;
    let nce = infonce_from_scores(tape, s, tau)?;

    let proj = tape.matmul(y_aug, w_aug)?;
    let sem = frame_l2_tape(tape, proj, teacher_c)?;
    Ok((nce, sem))
}

/// `[m | 1]`.
pub fn append_ones(m: &Matrix) -> Matrix {
    let mut out = Matrix::from_element(m.nrows(), m.ncols() + 1, 1.0);
    out.columns_mut(0, m.ncols()).copy_from(m);
    out
}

/// Weight stacked over its bias row.
pub fn stack_bias(weight: &Matrix, bias: &[f64]) -> Result<Matrix> {
    if bias.len() != weight.ncols() {
        return Err(Error::DimensionMismatch {
            context: "stack_bias",
            expected: weight.ncols(),
            got: bias.len(),
        });
    }
    let mut out = Matrix::zeros(weight.nrows() + 1, weight.ncols());
    out.rows_mut(0, weight.nrows()).copy_from(weight);
    for (c, b) in bias.iter().enumerate() {
        out[(weight.nrows(), c)] = *b;
    }
    if !all_finite(&out) {
        return Err(Error::NonFinite("alignment projection"));
    }
    Ok(out)
}
