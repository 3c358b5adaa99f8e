use std::fs;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::{mel_l2_loss_tape, stft_magnitude, stft_magnitude_tape};
use crate::error::{Error, Result};
use crate::gradcore::{Gradients, NodeId, Sgd, Tape};
use crate::linalg::Matrix;
use crate::losses::{
    alignment_terms_tape, frame_l2_tape, quantization_terms_tape, StageNodes,
};
use crate::quantizer::code_perplexity;

use super::config::{ExperimentConfig, Mode};
use super::data::{Batch, DataSource};
use super::eval::eval_disentangle;
use super::metrics::{write_metrics_csv, MetricsRecord};
use super::model::Model;
use super::artifacts::save_model;

/// Final model plus every logged record.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub records: Vec<MetricsRecord>,
}

impl TrainOutcome {
    pub fn final_record(&self) -> Option<&MetricsRecord> {
        self.records.last()
    }
}

struct Leaves {
    enc_w: NodeId,
    enc_b: NodeId,
    dec_w: NodeId,
    dec_b: NodeId,
    align_w: Option<NodeId>,
    align_b: Option<NodeId>,
    proj_in_w: Option<NodeId>,
    proj_in_b: Option<NodeId>,
    proj_out_w: Option<NodeId>,
    proj_out_b: Option<NodeId>,
    codebooks: Vec<NodeId>,
}

struct StepGraph {
    tape: Tape,
    leaves: Leaves,
    total: NodeId,
    l_ord: NodeId,
    l_stft: Option<NodeId>,
    l_nce: Option<NodeId>,
    l_sem: Option<NodeId>,
    decoded: NodeId,
    codes: Vec<Vec<usize>>,
    zc: Vec<Matrix>,
}

fn row(v: &[f64]) -> Matrix {
    Matrix::from_row_slice(1, v.len(), v)
}

fn build_graph(model: &Model, cfg: &ExperimentConfig, batch: &Batch) -> Result<StepGraph> {
    let w = &cfg.weights;
    let mut t = Tape::new();
    let x = t.constant(batch.mixture.clone());
    let clean = t.constant(batch.clean.clone());
    let enc_w = t.param(model.encoder.weight.clone());
    let enc_b = t.param(row(&model.encoder.bias));
    let y_c = t.affine(x, enc_w, enc_b)?;

    let mut leaves = Leaves {
        enc_w,
        enc_b,
        dec_w: enc_w,
        dec_b: enc_b,
        align_w: None,
        align_b: None,
        proj_in_w: None,
        proj_in_b: None,
        proj_out_w: None,
        proj_out_b: None,
        codebooks: Vec::new(),
    };
    let mut stages = Vec::new();
    let mut codes = Vec::new();
    let mut zc_values = Vec::new();

    let y_q = if model.is_quantized() {
        let q = &model.quantizer;
        let p = &q.projections;
        let pin_w = t.param(p.in_weight.clone());
        let pin_b = t.param(row(&p.in_bias));
        let pout_w = t.param(p.out_weight.clone());
        let pout_b = if cfg.train_out_bias {
            t.param(row(&p.out_bias))
        } else {
            t.constant(row(&p.out_bias))
        };
        leaves.proj_in_w = Some(pin_w);
        leaves.proj_in_b = Some(pin_b);
        leaves.proj_out_w = Some(pout_w);
        leaves.proj_out_b = cfg.train_out_bias.then_some(pout_b);
        let full = q.config.full_dim;
        let accumulate = q.accumulated_stages();
        let mut residual = y_c;
        let mut acc: Option<NodeId> = None;
        for (i, cb) in q.codebooks.iter().enumerate() {
            let z = t.affine(residual, pin_w, pin_b)?;
            let zc = t.slice_cols(z, 0, cb.dim())?;
            let (zq_ste, stage_codes) = t.ste_quantize(zc, cb.vectors())?;
            let table = t.param(cb.vectors().clone());
            let zq = t.gather_rows(table, &stage_codes)?;
            let padded = t.pad_cols(zq_ste, full)?;
            let out = t.affine(padded, pout_w, pout_b)?;
            residual = t.sub(residual, out)?;
            if i < accumulate {
                acc = Some(match acc {
                    Some(a) => t.add(a, out)?,
                    None => out,
                });
            }
            leaves.codebooks.push(table);
            stages.push(StageNodes { zc, zq });
            zc_values.push(t.value(zc).clone());
            codes.push(stage_codes);
        }
        match acc {
            Some(a) => a,
            None => t.constant(Matrix::zeros(batch.mixture.nrows(), cfg.latent_dim)),
        }
    } else {
        y_c
    };

    let dec_w = t.param(model.decoder.weight.clone());
    let dec_b = t.param(row(&model.decoder.bias));
    leaves.dec_w = dec_w;
    leaves.dec_b = dec_b;
    let decoded = t.affine(y_q, dec_w, dec_b)?;

    let (recon, l_stft) = match cfg.mode {
        Mode::Latent => (frame_l2_tape(&mut t, decoded, clean)?, None),
        Mode::Waveform => waveform_terms(&mut t, cfg, decoded, &batch.clean)?,
    };
    let l_ord = match quantization_terms_tape(&mut t, &stages, w.beta)? {
        Some(qt) => t.add(recon, qt)?,
        None => recon,
    };
    let mut total = t.scale(l_ord, w.lambda_ord)?;
    if let Some(s) = l_stft {
        let s = t.scale(s, w.lambda_stft)?;
        total = t.add(total, s)?;
    }

    let (mut l_nce, mut l_sem) = (None, None);
    if w.lambda_align > 0.0 {
        let aw = t.param(model.align.weight.clone());
        let ab = t.param(row(&model.align.bias));
        leaves.align_w = Some(aw);
        leaves.align_b = Some(ab);
        let w_aug = t.concat_rows(aw, ab)?;
        let ones = t.constant(Matrix::from_element(batch.mixture.nrows(), 1, 1.0));
        let y_aug = t.concat_cols(y_q, ones)?;
        let teacher = model.teacher.embed(&batch.clean)?;
        let (nce, sem) = alignment_terms_tape(&mut t, y_aug, w_aug, &teacher, w.tau)?;
        let sem_w = t.scale(sem, w.alpha)?;
        let group = t.add(nce, sem_w)?;
        let group = t.scale(group, w.lambda_align)?;
        total = t.add(total, group)?;
        l_nce = Some(nce);
        l_sem = Some(sem);
    }
    Ok(StepGraph {
        tape: t,
        leaves,
        total,
        l_ord,
        l_stft,
        l_nce,
        l_sem,
        decoded,
        codes,
        zc: zc_values,
    })
}

/// Mean per-item mel L2 and multi-resolution STFT terms for framed waveforms.
fn waveform_terms(
    t: &mut Tape,
    cfg: &ExperimentConfig,
    decoded: NodeId,
    clean: &Matrix,
) -> Result<(NodeId, Option<NodeId>)> {
    let per = cfg.frames_per_item;
    let items = clean.nrows() / per;
    let mut mel_sum: Option<NodeId> = None;
    let mut stft_sum: Option<NodeId> = None;
    let res = &cfg.waveform.stft_resolutions;
    for item in 0..items {
        let rows = t.slice_rows(decoded, item * per, per)?;
        let wave = t.flatten(rows)?;
        let target_rows = clean.rows(item * per, per).into_owned();
        let target_vec: Vec<f64> = target_rows.transpose().as_slice().to_vec();
        let target = t.constant(Matrix::from_row_slice(1, target_vec.len(), &target_vec));
        let mel = mel_l2_loss_tape(t, wave, target, &cfg.waveform.mel)?;
        mel_sum = Some(match mel_sum {
            Some(a) => t.add(a, mel)?,
            None => mel,
        });
        for &(n_fft, hop) in res {
            let mag = stft_magnitude_tape(t, wave, n_fft, hop)?;
            let want = t.constant(stft_magnitude(&target_vec, n_fft, hop)?.transpose());
            let d = t.sub(mag, want)?;
            let a = t.abs(d)?;
            let m = t.mean(a)?;
            stft_sum = Some(match stft_sum {
                Some(s) => t.add(s, m)?,
                None => m,
            });
        }
    }
    let mel = mel_sum.ok_or_else(|| Error::InsufficientData("empty waveform batch".into()))?;
    let mel = t.scale(mel, 1.0 / items as f64)?;
    let stft = match stft_sum {
        Some(s) => Some(t.scale(s, 1.0 / (items * res.len()) as f64)?),
        None => None,
    };
    Ok((mel, stft))
}

fn update(sgd: &Sgd, param: &mut Matrix, grads: &Gradients, id: NodeId) -> Result<()> {
    sgd.step(param, &grads.wrt(id))
}

fn update_vec(sgd: &Sgd, param: &mut Vec<f64>, grads: &Gradients, id: NodeId) -> Result<()> {
    let mut m = row(param);
    sgd.step(&mut m, &grads.wrt(id))?;
    *param = m.iter().copied().collect();
    Ok(())
}

fn apply_gradients(model: &mut Model, graph: &StepGraph, grads: &Gradients, sgd: &Sgd) -> Result<()> {
    let l = &graph.leaves;
    update(sgd, &mut model.encoder.weight, grads, l.enc_w)?;
    update_vec(sgd, &mut model.encoder.bias, grads, l.enc_b)?;
    update(sgd, &mut model.decoder.weight, grads, l.dec_w)?;
    update_vec(sgd, &mut model.decoder.bias, grads, l.dec_b)?;
    if let (Some(w), Some(b)) = (l.align_w, l.align_b) {
        update(sgd, &mut model.align.weight, grads, w)?;
        update_vec(sgd, &mut model.align.bias, grads, b)?;
    }
    let p = &mut model.quantizer.projections;
    if let (Some(w), Some(b)) = (l.proj_in_w, l.proj_in_b) {
        update(sgd, &mut p.in_weight, grads, w)?;
        update_vec(sgd, &mut p.in_bias, grads, b)?;
    }
    if let Some(w) = l.proj_out_w {
        update(sgd, &mut p.out_weight, grads, w)?;
    }
    if let Some(b) = l.proj_out_b {
        update_vec(sgd, &mut p.out_bias, grads, b)?;
    }
    for (cb, &id) in model.quantizer.codebooks.iter_mut().zip(&l.codebooks) {
        let mut v = cb.vectors().clone();
        sgd.step(&mut v, &grads.wrt(id))?;
        cb.set_vectors(v)?;
    }
    Ok(())
}

fn scalar_or_zero(t: &Tape, id: Option<NodeId>) -> Result<f64> {
    id.map_or(Ok(0.0), |n| t.scalar(n))
}

fn record(step: usize, graph: &StepGraph, batch: &Batch, model: &Model) -> Result<MetricsRecord> {
    let t = &graph.tape;
    let decoded = t.value(graph.decoded);
    let clean_mse = (decoded - &batch.clean).map(|d| d * d).mean();
    let perplexity = graph
        .codes
        .iter()
        .zip(&model.quantizer.codebooks)
        .map(|(c, cb)| code_perplexity(c, cb.size()))
        .collect();
    Ok(MetricsRecord {
        step,
        l_ord: t.scalar(graph.l_ord)?,
        l_stft: scalar_or_zero(t, graph.l_stft)?,
        l_nce: scalar_or_zero(t, graph.l_nce)?,
        l_sem: scalar_or_zero(t, graph.l_sem)?,
        total: t.scalar(graph.total)?,
        clean_mse,
        perplexity,
        clustering: None,
    })
}

fn divergence_dump(cfg: &ExperimentConfig, step: usize, rec: &MetricsRecord, model: &Model) -> String {
    let norms = serde_json::json!({
        "step": step,
        "l_ord": rec.l_ord.to_string(),
        "l_stft": rec.l_stft.to_string(),
        "l_nce": rec.l_nce.to_string(),
        "l_sem": rec.l_sem.to_string(),
        "total": rec.total.to_string(),
        "encoder_norm": model.encoder.weight.norm().to_string(),
        "decoder_norm": model.decoder.weight.norm().to_string(),
        "proj_in_norm": model.quantizer.projections.in_weight.norm().to_string(),
        "proj_out_norm": model.quantizer.projections.out_weight.norm().to_string(),
        "codebook_norms": model.quantizer.codebooks.iter().map(|c| c.vectors().norm().to_string()).collect::<Vec<_>>(),
    });
    let text = serde_json::to_string_pretty(&norms).unwrap_or_default();
    if let Some(dir) = &cfg.output_dir {
        let _ = fs::create_dir_all(dir);
        let _ = fs::write(dir.join("diverged.json"), &text);
    }
    text
}

/// Loss components of `model` on one batch without updating anything.
pub fn batch_metrics(model: &Model, cfg: &ExperimentConfig, batch: &Batch) -> Result<MetricsRecord> {
    let graph = build_graph(model, cfg, batch)?;
    record(0, &graph, batch, model)
}

/// Trains with SGD on fresh batches each step; logs every `log_every` steps
/// and at the last step. When `eval_frames > 0` the held-out clustering
/// metrics of quantized variants are attached to the last record.
pub fn train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut model = Model::new(cfg)?;
    let mut data = DataSource::new(cfg)?;
    let sgd = Sgd::new(cfg.learning_rate)?;
    let mut aux = ChaCha8Rng::seed_from_u64(cfg.seeds.model);
    aux.set_stream(1);
    let mut records = Vec::new();
    for step in 0..cfg.steps {
        let batch = data.next_batch(cfg.batch_size)?;
        if model.is_quantized() && !model.codebooks_ready() {
            model.init_codebooks(&batch.mixture, aux.next_u64())?;
        }
        let graph = build_graph(&model, cfg, &batch)?;
        let rec = record(step, &graph, &batch, &model)?;
        if !rec.total.is_finite() {
            let detail = divergence_dump(cfg, step, &rec, &model);
            return Err(Error::Diverged { step, detail });
        }
        if step % cfg.log_every == 0 || step + 1 == cfg.steps {
            records.push(rec);
        }
        let grads = graph.tape.backward(graph.total)?;
        apply_gradients(&mut model, &graph, &grads, &sgd)?;
        for ((cb, codes), zc) in model.quantizer.codebooks.iter_mut().zip(&graph.codes).zip(&graph.zc) {
            cb.record_usage(codes)?;
            cb.refresh_dead_codes(zc, cfg.dead_code_threshold, &mut aux)?;
        }
    }
    if cfg.eval_frames > 0 && model.is_quantized() && model.codebooks_ready() {
        let report = eval_disentangle(&model, cfg, cfg.seeds.eval)?;
        if let Some(last) = records.last_mut() {
            last.clustering = report.clustering;
        }
    }
    Ok(TrainOutcome { model, records })
}

/// [`train`], then writes `metrics.csv`, `model.vorvq` and `model.json` into `dir`.
pub fn train_to_dir(cfg: &ExperimentConfig, dir: &Path) -> Result<TrainOutcome> {
    let cfg = ExperimentConfig {
        output_dir: Some(dir.to_path_buf()),
        ..cfg.clone()
    };
    fs::create_dir_all(dir)?;
    let outcome = train(&cfg)?;
    write_metrics_csv(dir.join("metrics.csv"), &outcome.records)?;
    save_model(dir, &outcome.model, &cfg)?;
    Ok(outcome)
}
