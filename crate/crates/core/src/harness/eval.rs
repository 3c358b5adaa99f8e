use std::fmt::Write as _;

use crate::disentangle::{ClusteringMetrics, LabeledEmbeddings};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::config::{ExperimentConfig, Variant};
use super::data::DataSource;
use super::metrics::{fmt_f64, loss_slope};
use super::model::Model;
use super::train::train;

/// Held-out reconstruction error and (for quantized variants) clustering scores.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalReport {
    pub clean_mse: f64,
    pub clustering: Option<ClusteringMetrics>,
}

/// Enhanced (`y_q`, label 0) and noisy (sum of the stages after the
/// enhanced ones, label 1) embeddings, one point per frame.
///
/// `None` for the continuous variant, which has no noise branch.
pub fn disentangle_embeddings(model: &Model, mixture: &Matrix) -> Result<Option<LabeledEmbeddings>> {
    if !model.is_quantized() {
        return Ok(None);
    }
    let out = model.forward(mixture)?;
    let trace = out
        .trace
        .ok_or_else(|| Error::InvalidConfig("quantized model produced no trace".into()))?;
    let n_e = model.quantizer.config.enhanced_stages;
    let noisy = trace.stage_sum(n_e, trace.stages.len());
    Ok(Some(LabeledEmbeddings::from_parts(&out.y_q, &noisy)?))
}

/// Scores `model` on the held-out batch drawn with `eval_seed`.
pub fn eval_disentangle(model: &Model, cfg: &ExperimentConfig, eval_seed: u64) -> Result<EvalReport> {
    if cfg.eval_frames == 0 {
        return Err(Error::InvalidConfig("eval_frames must be positive".into()));
    }
    let data = DataSource::new(cfg)?;
    let batch = data.eval_batch(cfg.eval_frames, eval_seed)?;
    let mixture = batch.mixture.rows(0, cfg.eval_frames.min(batch.mixture.nrows())).into_owned();
    let clean = batch.clean.rows(0, mixture.nrows()).into_owned();
    let out = model.forward(&mixture)?;
    let clean_mse = (&out.decoded - &clean).map(|d| d * d).mean();
    let clustering = match disentangle_embeddings(model, &mixture)? {
        Some(e) => Some(e.evaluate(cfg.seeds.cluster)?),
        None => None,
    };
    Ok(EvalReport {
        clean_mse,
        clustering,
    })
}

/// One line of the discretization ablation.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub data_seed: u64,
    pub clean_mse: f64,
    pub clustering: Option<ClusteringMetrics>,
    pub loss_slope: f64,
    pub final_loss: f64,
    /// Per-stage perplexity at the last logged step; empty when continuous.
    pub perplexity: Vec<f64>,
}

/// Trains the continuous, RVQ and VO-RVQ variants from the same seeds and
/// data and scores each on the same held-out batch.
pub fn ablate(base: &ExperimentConfig) -> Result<Vec<AblationRow>> {
    let mut base = base.clone();
    base.eval_frames = base.eval_frames.max(1);
    Variant::ALL
        .iter()
        .map(|&variant| {
            let cfg = base.with_variant(variant);
            let mut quiet = cfg.clone();
            quiet.eval_frames = 0;
            let outcome = train(&quiet)?;
            let report = eval_disentangle(&outcome.model, &cfg, cfg.seeds.eval)?;
            let last = outcome
                .final_record()
                .ok_or_else(|| Error::InvalidConfig("training produced no records".into()))?;
            Ok(AblationRow {
                variant,
                data_seed: cfg.seeds.data,
                clean_mse: report.clean_mse,
                clustering: report.clustering,
                loss_slope: loss_slope(&outcome.records),
                final_loss: last.total,
                perplexity: last.perplexity.clone(),
            })
        })
        .collect()
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let stages = rows.iter().map(|r| r.perplexity.len()).max().unwrap_or(0);
    let mut out = String::from("variant,data_seed,clean_mse,accuracy,macro_recall,macro_f1,loss_slope,final_loss");
    for i in 1..=stages {
        write!(out, ",perplexity_{i}").expect("write to string");
    }
    out.push('\n');
    for r in rows {
        let c = r.clustering;
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        write!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.variant.name(),
            r.data_seed,
            fmt_f64(r.clean_mse),
            opt(c.map(|m| m.accuracy)),
            opt(c.map(|m| m.macro_recall)),
            opt(c.map(|m| m.macro_f1)),
            fmt_f64(r.loss_slope),
            fmt_f64(r.final_loss),
        )
        .expect("write to string");
        for i in 0..stages {
            write!(out, ",{}", opt(r.perplexity.get(i).copied())).expect("write to string");
        }
        out.push('\n');
    }
    out
}
