//! Experiment runner: toy encoder / quantizer / decoder training, the
//! disentanglement evaluation, the discretization ablation, gradient checks
//! and model serialization.

mod artifacts;
mod config;
mod data;
mod eval;
mod gradcheck;
mod metrics;
mod model;
mod train;

pub use artifacts::{codebooks_csv, load_model, save_model, sidecar_path, MatrixJson, BUNDLE_FILE, SIDECAR_FILE};
pub use config::{ExperimentConfig, Mode, Seeds, Variant, WaveformConfig};
pub use data::{Batch, DataSource};
pub use eval::{ablate, ablation_csv, disentangle_embeddings, eval_disentangle, AblationRow, EvalReport};
pub use gradcheck::{
    gradcheck_all, run_gradchecks, standard_checks, GradCheck, GradCheckEntry, GradCheckReport,
    GRADCHECK_TOLERANCE,
};
pub use metrics::{fmt_f64, linear_fit_slope, loss_slope, metrics_csv, write_metrics_csv, MetricsRecord};
pub use model::{AffineMap, ForwardOutput, Model};
pub use train::{batch_metrics, train, train_to_dir, TrainOutcome};
