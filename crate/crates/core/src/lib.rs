//! Variance-ordered residual vector quantization (VO-RVQ).
//!
//! The crate is split along the pipeline:
//!
//! - [`quantizer`]: VQ primitives, plain RVQ, the variance-ordered variant with
//!   triangular masking, codebook lifecycle and the `VORVQ1` bundle format.
//! - [`gradcore`]: a small reverse-mode tape with stop-gradient and
//!   straight-through quantization, plus finite-difference checking.
//! - [`losses`]: the order-inducing objective, semantic alignment, InfoNCE and
//!   the weighted total.
//! - [`dsp`]: STFT magnitudes and mel filterbanks.
//! - [`disentangle`]: spectral clustering and clustering metrics.
//! - [`synthdata`]: deterministic two-source latent and waveform generators.
//! - [`harness`]: training, ablation, evaluation and the CLI plumbing.

pub mod disentangle;
pub mod dsp;
pub mod error;
pub mod gradcore;
pub mod harness;
pub mod linalg;
pub mod losses;
pub mod quantizer;
pub mod synthdata;

pub use error::{Error, Result};
pub use linalg::Matrix;
