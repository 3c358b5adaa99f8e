//! Python bindings: quantizer construction, forward/decode, bundle I/O, the
//! loss and DSP kernels, synthetic data, clustering and the experiment runner.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use vorvq::disentangle::{clustering_metrics as metrics, spectral_clustering as cluster};
use vorvq::harness::{gradcheck_all as gradcheck, metrics_csv, train as run_training, ExperimentConfig};
use vorvq::quantizer::{
    self, kmeans_pp_init, load_bundle, save_bundle, Codebook, LatentSequence, Projections, QuantizerBundle,
    QuantizerKind,
};
use vorvq::Matrix;

fn err(e: vorvq::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_matrix(rows: &[Vec<f64>]) -> PyResult<Matrix> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Ok(Matrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}

fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Stage count, enhanced-stage count, dimensions, codebook size and seed.
#[pyclass(name = "VoRvqConfig", module = "vorvq_py", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: quantizer::VoRvqConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (num_stages=5, enhanced_stages=4, latent_dim=16, full_dim=16, codebook_size=64, seed=0))]
    fn new(
        num_stages: usize,
        enhanced_stages: usize,
        latent_dim: usize,
        full_dim: usize,
        codebook_size: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let inner = quantizer::VoRvqConfig::new(num_stages, enhanced_stages, latent_dim, full_dim, codebook_size, seed)
            .map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn num_stages(&self) -> usize {
        self.inner.num_stages
    }

    #[getter]
    fn enhanced_stages(&self) -> usize {
        self.inner.enhanced_stages
    }

    #[getter]
    fn stage_dims(&self) -> Vec<usize> {
        self.inner.stage_dims.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "VoRvqConfig(num_stages={}, enhanced_stages={}, latent_dim={}, full_dim={}, stage_dims={:?})",
            self.inner.num_stages,
            self.inner.enhanced_stages,
            self.inner.latent_dim,
            self.inner.full_dim,
            self.inner.stage_dims
        )
    }
}

/// A residual quantizer, either variance-ordered (`"vo_rvq"`) or plain (`"rvq"`).
#[pyclass(name = "Quantizer", module = "vorvq_py")]
struct PyQuantizer {
    inner: quantizer::Quantizer,
}

fn parse_kind(kind: &str) -> PyResult<QuantizerKind> {
    match kind {
        "vo_rvq" => Ok(QuantizerKind::VoRvq),
        "rvq" => Ok(QuantizerKind::Rvq),
        other => Err(PyValueError::new_err(format!("unknown quantizer kind {other:?}"))),
    }
}

#[pymethods]
impl PyQuantizer {
    /// Random projections, codebooks seeded by k-means++ on the projected
    /// residuals of `data` (rows of length `latent_dim`).
    #[staticmethod]
    #[pyo3(signature = (config, data, kind="vo_rvq"))]
    fn fit_init(config: &PyConfig, data: Vec<Vec<f64>>, kind: &str) -> PyResult<Self> {
        use rand::SeedableRng;
        let kind = parse_kind(kind)?;
        let cfg = config.inner.clone();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
        let proj = Projections::random(cfg.latent_dim, cfg.full_dim, &mut rng);
        let mut residual = to_matrix(&data)?;
        let mut codebooks = Vec::new();
        for (i, (&d, &k)) in cfg.dims_for(kind).iter().zip(&cfg.codebook_sizes).enumerate() {
            let z = proj.project_in(&residual).map_err(err)?;
            let zc = z.columns(0, d).into_owned();
            let cb = Codebook::new(i + 1, kmeans_pp_init(&zc, k, cfg.seed + i as u64).map_err(err)?).map_err(err)?;
            let stage = quantizer::residual_forward(&residual, &proj, std::slice::from_ref(&cb), 0).map_err(err)?;
            residual = stage.final_residual().clone();
            codebooks.push(cb);
        }
        Ok(Self {
            inner: quantizer::Quantizer {
                kind,
                config: cfg,
                projections: proj,
                codebooks,
            },
        })
    }

    /// Loads a `VORVQ1` bundle.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let b = load_bundle(path).map_err(err)?;
        Ok(Self {
            inner: b.to_quantizer(0).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_bundle(path, &QuantizerBundle::from_quantizer(&self.inner)).map_err(err)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.inner.kind {
            QuantizerKind::VoRvq => "vo_rvq",
            QuantizerKind::Rvq => "rvq",
        }
    }

    #[getter]
    fn stage_dims(&self) -> Vec<usize> {
        self.inner.stage_dims()
    }

    /// Returns `(y_q, codes, final_residual)`; `codes[stage][frame]`.
    fn forward(&self, frames: Vec<Vec<f64>>) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<usize>>, Vec<Vec<f64>>)> {
        let y = LatentSequence::from_frames(to_matrix(&frames)?).map_err(err)?;
        let (y_q, trace) = self.inner.forward(&y).map_err(err)?;
        Ok((to_rows(&y_q.frames), trace.codes(), to_rows(trace.final_residual())))
    }

    /// Per-stage outputs `[stage][frame][dim]`.
    fn stage_outputs(&self, frames: Vec<Vec<f64>>) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let y = LatentSequence::from_frames(to_matrix(&frames)?).map_err(err)?;
        let (_, trace) = self.inner.forward(&y).map_err(err)?;
        Ok(trace.stages.iter().map(|s| to_rows(&s.output)).collect())
    }

    fn decode(&self, codes: Vec<Vec<usize>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(to_rows(&self.inner.decode(&codes).map_err(err)?.frames))
    }

    fn codebook(&self, stage: usize) -> PyResult<Vec<Vec<f64>>> {
        let cb = stage
            .checked_sub(1)
            .and_then(|i| self.inner.codebooks.get(i))
            .ok_or_else(|| PyValueError::new_err(format!("no stage {stage}")))?;
        Ok(to_rows(cb.vectors()))
    }
}

/// Mean InfoNCE over rows of L2-normalized features.
#[pyfunction]
fn infonce(fake: Vec<Vec<f64>>, real: Vec<Vec<f64>>, tau: f64) -> PyResult<f64> {
    vorvq::losses::infonce(&to_matrix(&fake)?, &to_matrix(&real)?, tau).map_err(err)
}

#[pyfunction]
fn l2_normalize(features: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(to_rows(&vorvq::losses::l2_normalize(&to_matrix(&features)?).map_err(err)?))
}

#[pyfunction]
fn hz_to_mel(f: f64) -> f64 {
    vorvq::dsp::hz_to_mel(f)
}

/// `bins × frames` magnitude spectrogram.
#[pyfunction]
fn stft_magnitude(wave: Vec<f64>, n_fft: usize, hop: usize) -> PyResult<Vec<Vec<f64>>> {
    Ok(to_rows(&vorvq::dsp::stft_magnitude(&wave, n_fft, hop).map_err(err)?))
}

/// Mel L2 loss under the default 16 kHz mel configuration.
#[pyfunction]
fn mel_l2_loss(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    vorvq::dsp::mel_l2_loss(&a, &b, &vorvq::dsp::MelConfig::default()).map_err(err)
}

/// Returns a dict with `clean`, `noise` and `mixture` row lists.
#[pyfunction]
fn gen_two_source(
    py: Python<'_>,
    frames: usize,
    dim: usize,
    rank_clean: usize,
    variance_ratio: f64,
    seed: u64,
) -> PyResult<Py<pyo3::types::PyDict>> {
    let b = vorvq::synthdata::gen_two_source(frames, dim, rank_clean, variance_ratio, seed).map_err(err)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("clean", to_rows(&b.clean))?;
    d.set_item("noise", to_rows(&b.noise))?;
    d.set_item("mixture", to_rows(&b.mixture))?;
    Ok(d.unbind())
}

#[pyfunction]
fn gen_noisy_waveform(duration_s: f64, sample_rate: f64, snr_db: f64, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    vorvq::synthdata::gen_noisy_waveform(duration_s, sample_rate, snr_db, seed).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (points, n_clusters=2, seed=0))]
fn spectral_clustering(points: Vec<Vec<f64>>, n_clusters: usize, seed: u64) -> PyResult<Vec<usize>> {
    cluster(&to_matrix(&points)?, n_clusters, seed).map_err(err)
}

/// `(accuracy, macro_recall, macro_f1)` under the best label mapping.
#[pyfunction]
fn clustering_metrics(pred: Vec<usize>, truth: Vec<usize>) -> PyResult<(f64, f64, f64)> {
    let m = metrics(&pred, &truth).map_err(err)?;
    Ok((m.accuracy, m.macro_recall, m.macro_f1))
}

/// Trains from a JSON config string and returns the metrics CSV.
#[pyfunction]
fn train(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(err)?;
    let out = py.detach(|| run_training(&cfg)).map_err(err)?;
    Ok(metrics_csv(&out.records))
}

/// `[(op, max_relative_error, passed)]`.
#[pyfunction]
#[pyo3(signature = (points=10, seed=0))]
fn gradcheck_all(points: usize, seed: u64) -> PyResult<Vec<(String, f64, bool)>> {
    let r = gradcheck(points, seed).map_err(err)?;
    Ok(r.entries.into_iter().map(|e| (e.op, e.max_rel_error, e.passed)).collect())
}

#[pymodule]
fn vorvq_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyQuantizer>()?;
    m.add_function(wrap_pyfunction!(infonce, m)?)?;
    m.add_function(wrap_pyfunction!(l2_normalize, m)?)?;
    m.add_function(wrap_pyfunction!(hz_to_mel, m)?)?;
    m.add_function(wrap_pyfunction!(stft_magnitude, m)?)?;
    m.add_function(wrap_pyfunction!(mel_l2_loss, m)?)?;
    m.add_function(wrap_pyfunction!(gen_two_source, m)?)?;
    m.add_function(wrap_pyfunction!(gen_noisy_waveform, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_clustering, m)?)?;
    m.add_function(wrap_pyfunction!(clustering_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck_all, m)?)?;
    Ok(())
}
