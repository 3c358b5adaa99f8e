//! Vector-quantization stages, plain residual VQ and the variance-ordered
//! variant with triangular masking.
//!
//! Stage `i` (1-based) projects the running residual into the shared
//! `full_dim` space, keeps the first `d_i` coordinates, snaps them to the
//! nearest code of codebook `i`, zero-pads back to `full_dim` and projects out.
//! Every stage updates the residual; only the first `enhanced_stages` outputs
//! are accumulated into the enhanced latent `y_q`.

mod bundle;
mod codebook;
mod config;
mod forward;
mod kmeans;
mod latent;
mod projections;

pub use bundle::{decode_bundle, encode_bundle, load_bundle, save_bundle, QuantizerBundle, MAGIC};
pub use codebook::{code_perplexity, nearest_code, refresh_dead_codes, Codebook};
pub use config::{linear_schedule, QuantizerKind, VoRvqConfig};
pub use forward::{
    decode_codes, quantize_stage, residual_forward, rvq_forward, vo_rvq_forward, QuantizationTrace,
    Quantizer, StageOutput, StageRecord,
};
pub use kmeans::{kmeans_pp_indices, kmeans_pp_init};
pub use latent::LatentSequence;
pub use projections::Projections;
