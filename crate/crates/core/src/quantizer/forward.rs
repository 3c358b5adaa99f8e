use crate::error::{Error, Result};
use crate::linalg::{affine_vec, all_finite, Matrix};

use super::codebook::{nearest_code, Codebook};
use super::config::{QuantizerKind, VoRvqConfig};
use super::latent::LatentSequence;
use super::projections::Projections;

/// Result of quantizing one residual vector at one stage.
#[derive(Clone, Debug, PartialEq)]
pub struct StageOutput {
    pub code: usize,
    /// Stage contribution in latent space (`proj_out` of the padded code).
    pub output: Vec<f64>,
    /// Kept (unmasked) projected coordinates before quantization.
    pub zc_hat: Vec<f64>,
    /// The selected code vector.
    pub zq_hat: Vec<f64>,
}

/// Project, mask to the codebook's width, snap, pad and project back.
///
/// `stage` is 1-based and must match the codebook's stage index.
pub fn quantize_stage(
    residual: &[f64],
    stage: usize,
    proj: &Projections,
    cb: &Codebook,
) -> Result<StageOutput> {
    if cb.stage_index() != stage {
        return Err(Error::StageMismatch {
            codebook: cb.stage_index(),
            requested: stage,
        });
    }
    if residual.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("stage residual"));
    }
    if cb.dim() > proj.full_dim() {
        return Err(Error::DimensionMismatch {
            context: "codebook width vs full_dim",
            expected: proj.full_dim(),
            got: cb.dim(),
        });
    }
    let z = affine_vec(residual, &proj.in_weight, &proj.in_bias)?;
    let zc_hat = z[..cb.dim()].to_vec();
    let (code, zq_hat) = nearest_code(&zc_hat, cb)?;
    let mut padded = vec![0.0; proj.full_dim()];
    padded[..cb.dim()].copy_from_slice(&zq_hat);
    let output = affine_vec(&padded, &proj.out_weight, &proj.out_bias)?;
    Ok(StageOutput {
        code,
        output,
        zc_hat,
        zq_hat,
    })
}

/// Per-stage tensors of one forward pass, all `T`-row matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct StageRecord {
    pub zc_hat: Matrix,
    pub zq_hat: Matrix,
    pub codes: Vec<usize>,
    /// `y_{q,i}`: stage output in latent space.
    pub output: Matrix,
    /// `r_i = r_{i-1} - y_{q,i}`.
    pub residual: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantizationTrace {
    pub input: Matrix,
    pub stages: Vec<StageRecord>,
    /// Number of leading stages summed into `y_q`.
    pub accumulated_stages: usize,
    pub y_q: Matrix,
}

impl QuantizationTrace {
    pub fn codes(&self) -> Vec<Vec<usize>> {
        self.stages.iter().map(|s| s.codes.clone()).collect()
    }

    pub fn final_residual(&self) -> &Matrix {
        self.stages.last().map(|s| &s.residual).unwrap_or(&self.input)
    }

    /// Sum of stage outputs `start..end` (0-based, half open), zeros if empty.
    pub fn stage_sum(&self, start: usize, end: usize) -> Matrix {
        let mut acc = Matrix::zeros(self.input.nrows(), self.input.ncols());
        for s in &self.stages[start.min(self.stages.len())..end.min(self.stages.len())] {
            acc += &s.output;
        }
        acc
    }
}

fn check_codebooks(codebooks: &[Codebook], dims: &[usize], sizes: Option<&[usize]>) -> Result<()> {
    if codebooks.len() != dims.len() {
        return Err(Error::InvalidConfig(format!(
            "expected {} codebooks, got {}",
            dims.len(),
            codebooks.len()
        )));
    }
    for (i, (cb, &d)) in codebooks.iter().zip(dims).enumerate() {
        if cb.stage_index() != i + 1 {
            return Err(Error::StageMismatch {
                codebook: cb.stage_index(),
                requested: i + 1,
            });
        }
        if cb.dim() != d {
            return Err(Error::InvalidConfig(format!(
                "codebook {} has width {}, stage expects {d}",
                i + 1,
                cb.dim()
            )));
        }
        if let Some(sizes) = sizes {
            if cb.size() != sizes[i] {
                return Err(Error::InvalidConfig(format!(
                    "codebook {} has {} codes, config says {}",
                    i + 1,
                    cb.size(),
                    sizes[i]
                )));
            }
        }
    }
    Ok(())
}

fn check_input(y_c: &Matrix, proj: &Projections) -> Result<()> {
    proj.validate()?;
    if y_c.ncols() != proj.latent_dim() {
        return Err(Error::DimensionMismatch {
            context: "latent frame width",
            expected: proj.latent_dim(),
            got: y_c.ncols(),
        });
    }
    if !all_finite(y_c) {
        return Err(Error::NonFinite("quantizer input"));
    }
    Ok(())
}

/// Residual cascade over all codebooks; each stage keeps `cb.dim()` projected
/// coordinates and the first `accumulate` outputs are summed into `y_q`.
pub fn residual_forward(
    y_c: &Matrix,
    proj: &Projections,
    codebooks: &[Codebook],
    accumulate: usize,
) -> Result<QuantizationTrace> {
    check_input(y_c, proj)?;
    if accumulate > codebooks.len() {
        return Err(Error::InvalidConfig(format!(
            "cannot accumulate {accumulate} of {} stages",
            codebooks.len()
        )));
    }
    let t = y_c.nrows();
    let full = proj.full_dim();
    let mut residual = y_c.clone();
    let mut y_q = Matrix::zeros(t, y_c.ncols());
    let mut stages = Vec::with_capacity(codebooks.len());
    for (i, cb) in codebooks.iter().enumerate() {
        if cb.dim() > full {
            return Err(Error::DimensionMismatch {
                context: "codebook width vs full_dim",
                expected: full,
                got: cb.dim(),
            });
        }
        let d = cb.dim();
        let z = proj.project_in(&residual)?;
        let zc_hat = z.columns(0, d).into_owned();
        let codes = cb.assign(&zc_hat)?;
        let zq_hat = Matrix::from_fn(t, d, |r, c| cb.vectors()[(codes[r], c)]);
        let mut padded = Matrix::zeros(t, full);
        padded.columns_mut(0, d).copy_from(&zq_hat);
        let output = proj.project_out(&padded)?;
        residual -= &output;
        if i < accumulate {
            y_q += &output;
        }
        stages.push(StageRecord {
            zc_hat,
            zq_hat,
            codes,
            output,
            residual: residual.clone(),
        });
    }
    Ok(QuantizationTrace {
        input: y_c.clone(),
        stages,
        accumulated_stages: accumulate,
        y_q,
    })
}

/// Variance-ordered RVQ: stage `i` keeps `cfg.stage_dims[i]` coordinates and
/// only the first `cfg.enhanced_stages` outputs reach `y_q`.
pub fn vo_rvq_forward(
    y_c: &LatentSequence,
    cfg: &VoRvqConfig,
    proj: &Projections,
    codebooks: &[Codebook],
) -> Result<(LatentSequence, QuantizationTrace)> {
    cfg.validate()?;
    check_structure(cfg, proj)?;
    check_codebooks(codebooks, &cfg.stage_dims, Some(&cfg.codebook_sizes))?;
    let trace = residual_forward(&y_c.frames, proj, codebooks, cfg.enhanced_stages)?;
    Ok((LatentSequence::new(trace.y_q.clone(), y_c.frame_rate)?, trace))
}

/// Plain RVQ baseline: no masking, every stage accumulated.
pub fn rvq_forward(
    y_c: &LatentSequence,
    cfg: &VoRvqConfig,
    proj: &Projections,
    codebooks: &[Codebook],
) -> Result<(LatentSequence, QuantizationTrace)> {
    cfg.validate()?;
    check_structure(cfg, proj)?;
    check_codebooks(codebooks, &cfg.dims_for(QuantizerKind::Rvq), Some(&cfg.codebook_sizes))?;
    let trace = residual_forward(&y_c.frames, proj, codebooks, cfg.num_stages)?;
    Ok((LatentSequence::new(trace.y_q.clone(), y_c.frame_rate)?, trace))
}

fn check_structure(cfg: &VoRvqConfig, proj: &Projections) -> Result<()> {
    if proj.latent_dim() != cfg.latent_dim || proj.full_dim() != cfg.full_dim {
        return Err(Error::InvalidConfig(format!(
            "projections are {}→{}, config says {}→{}",
            proj.latent_dim(),
            proj.full_dim(),
            cfg.latent_dim,
            cfg.full_dim
        )));
    }
    Ok(())
}

/// Rebuilds `y_q` from per-stage code sequences (`codes[stage][frame]`).
///
/// Follows the exact arithmetic of [`residual_forward`], so codes produced by
/// a forward pass decode to a bit-identical `y_q`. Only the accumulated
/// stages contribute, but every supplied index is range-checked.
pub fn decode_codes(
    codes: &[Vec<usize>],
    kind: QuantizerKind,
    cfg: &VoRvqConfig,
    proj: &Projections,
    codebooks: &[Codebook],
) -> Result<LatentSequence> {
    cfg.validate()?;
    check_structure(cfg, proj)?;
    proj.validate()?;
    check_codebooks(codebooks, &cfg.dims_for(kind), Some(&cfg.codebook_sizes))?;
    if codes.len() != cfg.num_stages {
        return Err(Error::InvalidConfig(format!(
            "expected codes for {} stages, got {}",
            cfg.num_stages,
            codes.len()
        )));
    }
    let t = codes.first().map_or(0, Vec::len);
    for (i, (seq, cb)) in codes.iter().zip(codebooks).enumerate() {
        if seq.len() != t {
            return Err(Error::InvalidConfig(format!(
                "stage {} has {} frames, expected {t}",
                i + 1,
                seq.len()
            )));
        }
        if let Some(&bad) = seq.iter().find(|&&c| c >= cb.size()) {
            return Err(Error::CodeOutOfRange {
                stage: i + 1,
                index: bad,
                size: cb.size(),
            });
        }
    }
    let accumulate = match kind {
        QuantizerKind::VoRvq => cfg.enhanced_stages,
        QuantizerKind::Rvq => cfg.num_stages,
    };
    let full = proj.full_dim();
    let mut y_q = Matrix::zeros(t, proj.latent_dim());
    for (seq, cb) in codes.iter().zip(codebooks).take(accumulate) {
        let d = cb.dim();
        let mut padded = Matrix::zeros(t, full);
        for (r, &c) in seq.iter().enumerate() {
            for j in 0..d {
                padded[(r, j)] = cb.vectors()[(c, j)];
            }
        }
        y_q += &proj.project_out(&padded)?;
    }
    LatentSequence::from_frames(y_q)
}

/// A configured quantizer: kind, structure, projections and codebooks.
#[derive(Clone, Debug, PartialEq)]
pub struct Quantizer {
    pub kind: QuantizerKind,
    pub config: VoRvqConfig,
    pub projections: Projections,
    pub codebooks: Vec<Codebook>,
}

impl Quantizer {
    pub fn stage_dims(&self) -> Vec<usize> {
        self.config.dims_for(self.kind)
    }

    pub fn accumulated_stages(&self) -> usize {
        match self.kind {
            QuantizerKind::VoRvq => self.config.enhanced_stages,
            QuantizerKind::Rvq => self.config.num_stages,
        }
    }

    pub fn forward(&self, y_c: &LatentSequence) -> Result<(LatentSequence, QuantizationTrace)> {
        match self.kind {
            QuantizerKind::VoRvq => vo_rvq_forward(y_c, &self.config, &self.projections, &self.codebooks),
            QuantizerKind::Rvq => rvq_forward(y_c, &self.config, &self.projections, &self.codebooks),
        }
    }

    pub fn decode(&self, codes: &[Vec<usize>]) -> Result<LatentSequence> {
        decode_codes(codes, self.kind, &self.config, &self.projections, &self.codebooks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn book(stage: usize, rows: &[&[f64]]) -> Codebook {
        let dim = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Codebook::new(stage, Matrix::from_row_slice(rows.len(), dim, &flat)).unwrap()
    }

    fn two_stage() -> (VoRvqConfig, Projections, Vec<Codebook>) {
        let mut cfg = VoRvqConfig::new(2, 1, 2, 2, 2, 0).unwrap();
        cfg.stage_dims = vec![1, 2];
        let books = vec![
            book(1, &[&[0.0], &[2.0]]),
            book(2, &[&[0.0, 0.0], &[0.0, 3.0]]),
        ];
        (cfg, Projections::identity(2, 2), books)
    }

    #[test]
    fn stage_hand_trace() {
        let proj = Projections::identity(2, 2);
        let cb = book(1, &[&[0.0], &[2.0]]);
        let out = quantize_stage(&[2.2, 3.1], 1, &proj, &cb).unwrap();
        assert_eq!(out.code, 1);
        assert_eq!(out.output, vec![2.0, 0.0]);
        assert_eq!(out.zc_hat, vec![2.2]);
        assert_eq!(out.zq_hat, vec![2.0]);
    }

    #[test]
    fn stage_exact_code_has_zero_error() {
        let proj = Projections::identity(2, 2);
        let cb = book(1, &[&[0.0], &[2.0]]);
        let out = quantize_stage(&[2.0, -7.0], 1, &proj, &cb).unwrap();
        assert_eq!(out.zc_hat, out.zq_hat);
    }

    #[test]
    fn stage_without_mask_is_plain_projected_vq() {
        let proj = Projections::identity(2, 2);
        let cb = book(1, &[&[0.0, 0.0], &[1.0, 1.0]]);
        let out = quantize_stage(&[0.9, 1.2], 1, &proj, &cb).unwrap();
        assert_eq!(out.code, 1);
        assert_eq!(out.output, vec![1.0, 1.0]);
    }

    #[test]
    fn stage_errors() {
        let proj = Projections::identity(2, 2);
        let cb = book(2, &[&[0.0], &[2.0]]);
        assert!(matches!(
            quantize_stage(&[1.0, 1.0], 1, &proj, &cb),
            Err(Error::StageMismatch { .. })
        ));
        assert!(matches!(
            quantize_stage(&[f64::NAN, 1.0], 2, &proj, &cb),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn vo_rvq_two_stage_hand_trace() {
        let (cfg, proj, books) = two_stage();
        let y_c = LatentSequence::from_frames(Matrix::from_row_slice(1, 2, &[2.2, 3.1])).unwrap();
        let (y_q, trace) = vo_rvq_forward(&y_c, &cfg, &proj, &books).unwrap();
        assert_eq!(y_q.frames.as_slice(), &[2.0, 0.0]);
        assert_eq!(trace.codes(), vec![vec![1], vec![1]]);
        let r = trace.final_residual();
        assert!((r[(0, 0)] - 0.2).abs() < 1e-12);
        assert!((r[(0, 1)] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn rvq_two_stage_sums_everything() {
        let (cfg, proj, _) = two_stage();
        let books = vec![
            book(1, &[&[0.0, 0.0], &[2.0, 0.0]]),
            book(2, &[&[0.0, 0.0], &[0.0, 3.0]]),
        ];
        let y_c = LatentSequence::from_frames(Matrix::from_row_slice(1, 2, &[2.2, 3.1])).unwrap();
        let (y_q, trace) = rvq_forward(&y_c, &cfg, &proj, &books).unwrap();
        assert_eq!(y_q.frames.as_slice(), &[2.0, 3.0]);
        assert_eq!(trace.codes(), vec![vec![1], vec![1]]);
    }

    #[test]
    fn empty_quantizer_passes_input_to_residual() {
        let proj = Projections::identity(2, 2);
        let y_c = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let trace = residual_forward(&y_c, &proj, &[], 0).unwrap();
        assert_eq!(trace.y_q, Matrix::zeros(2, 2));
        assert_eq!(trace.final_residual(), &y_c);
    }

    #[test]
    fn zero_input_with_zero_codes() {
        let (cfg, proj, _) = two_stage();
        let books = vec![
            book(1, &[&[0.0], &[5.0]]),
            book(2, &[&[0.0, 0.0], &[1.0, 3.0]]),
        ];
        let y_c = LatentSequence::from_frames(Matrix::zeros(3, 2)).unwrap();
        let (y_q, trace) = vo_rvq_forward(&y_c, &cfg, &proj, &books).unwrap();
        assert!(y_q.frames.iter().all(|&v| v == 0.0));
        assert!(trace.stages.iter().all(|s| s.residual.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn decode_round_trip_and_range_check() {
        let (cfg, proj, books) = two_stage();
        let y_c = LatentSequence::from_frames(Matrix::from_row_slice(
            3,
            2,
            &[2.2, 3.1, -0.4, 0.2, 1.1, 2.9],
        ))
        .unwrap();
        let (y_q, trace) = vo_rvq_forward(&y_c, &cfg, &proj, &books).unwrap();
        let decoded = decode_codes(&trace.codes(), QuantizerKind::VoRvq, &cfg, &proj, &books).unwrap();
        assert_eq!(decoded.frames.as_slice(), y_q.frames.as_slice());

        let bad = vec![vec![0, 1, 2], vec![0, 0, 0]];
        assert!(matches!(
            decode_codes(&bad, QuantizerKind::VoRvq, &cfg, &proj, &books),
            Err(Error::CodeOutOfRange { stage: 1, index: 2, .. })
        ));
    }

    #[test]
    fn codebook_count_must_match() {
        let (cfg, proj, books) = two_stage();
        let y_c = LatentSequence::from_frames(Matrix::zeros(1, 2)).unwrap();
        assert!(vo_rvq_forward(&y_c, &cfg, &proj, &books[..1]).is_err());
    }
}
