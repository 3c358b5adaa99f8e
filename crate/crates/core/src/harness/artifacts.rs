use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{to_row_major, Matrix};
use crate::quantizer::{decode_bundle, encode_bundle, Quantizer, QuantizerBundle};
use crate::synthdata::RNG_NAME;

use super::config::{ExperimentConfig, Variant};
use super::metrics::fmt_f64;
use super::model::{AffineMap, Model};

pub const BUNDLE_FILE: &str = "model.vorvq";
pub const SIDECAR_FILE: &str = "model.json";
const SIDECAR_FORMAT: &str = "vorvq-sidecar-1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    /// Row-major entries.
    pub data: Vec<f64>,
}

impl From<&Matrix> for MatrixJson {
    fn from(m: &Matrix) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: to_row_major(m),
        }
    }
}

impl TryFrom<&MatrixJson> for Matrix {
    type Error = Error;

    fn try_from(m: &MatrixJson) -> Result<Self> {
        if m.data.len() != m.rows * m.cols {
            return Err(Error::Format(format!(
                "matrix of {}×{} has {} entries",
                m.rows,
                m.cols,
                m.data.len()
            )));
        }
        Ok(Matrix::from_row_slice(m.rows, m.cols, &m.data))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct AffineJson {
    weight: MatrixJson,
    bias: Vec<f64>,
}

impl From<&AffineMap> for AffineJson {
    fn from(a: &AffineMap) -> Self {
        Self {
            weight: (&a.weight).into(),
            bias: a.bias.clone(),
        }
    }
}

impl TryFrom<&AffineJson> for AffineMap {
    type Error = Error;

    fn try_from(a: &AffineJson) -> Result<Self> {
        let weight = Matrix::try_from(&a.weight)?;
        if a.bias.len() != weight.ncols() {
            return Err(Error::Format("affine bias length disagrees with weight".into()));
        }
        Ok(Self {
            weight,
            bias: a.bias.clone(),
        })
    }
}

/// Encoder, decoder, alignment head and the full experiment config; the
/// quantizer itself lives in the binary bundle next to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    format: String,
    rng: String,
    variant: Variant,
    config: ExperimentConfig,
    encoder: AffineJson,
    decoder: AffineJson,
    align: AffineJson,
}

/// Path of the JSON sidecar belonging to a bundle path.
pub fn sidecar_path(bundle: &Path) -> PathBuf {
    bundle.with_extension("json")
}

/// Writes `model.vorvq` and `model.json` into `dir`.
pub fn save_model(dir: &Path, model: &Model, cfg: &ExperimentConfig) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let bundle_path = dir.join(BUNDLE_FILE);
    let bytes = encode_bundle(&QuantizerBundle::from_quantizer(&model.quantizer))?;
    fs::write(&bundle_path, bytes)?;
    let sidecar = Sidecar {
        format: SIDECAR_FORMAT.into(),
        rng: RNG_NAME.into(),
        variant: model.variant,
        config: ExperimentConfig {
            output_dir: None,
            ..cfg.clone()
        },
        encoder: (&model.encoder).into(),
        decoder: (&model.decoder).into(),
        align: (&model.align).into(),
    };
    fs::write(sidecar_path(&bundle_path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(bundle_path)
}

/// Reads a bundle and its sidecar back into a model and its config.
pub fn load_model(bundle_path: &Path) -> Result<(Model, ExperimentConfig)> {
    let bytes = fs::read(bundle_path)?;
    let bundle = decode_bundle(&bytes)?;
    let text = fs::read_to_string(sidecar_path(bundle_path))?;
    let sidecar: Sidecar = serde_json::from_str(&text)?;
    if sidecar.format != SIDECAR_FORMAT {
        return Err(Error::Format(format!("unknown sidecar format {:?}", sidecar.format)));
    }
    let cfg = sidecar.config;
    cfg.validate()?;
    let mut model = Model::new(&cfg)?;
    if model.variant != sidecar.variant {
        return Err(Error::Format("sidecar variant disagrees with its config".into()));
    }
    model.encoder = AffineMap::try_from(&sidecar.encoder)?;
    model.decoder = AffineMap::try_from(&sidecar.decoder)?;
    model.align = AffineMap::try_from(&sidecar.align)?;
    let q: &Quantizer = &model.quantizer;
    if bundle.stage_dims != q.stage_dims()
        || bundle.enhanced_stages != q.accumulated_stages()
        || bundle.codebook_sizes != q.config.codebook_sizes
        || bundle.latent_dim != q.config.latent_dim
        || bundle.full_dim != q.config.full_dim
    {
        return Err(Error::Format("bundle structure disagrees with the sidecar config".into()));
    }
    model.quantizer.projections = bundle.projections;
    model.quantizer.codebooks = bundle.codebooks;
    Ok((model, cfg))
}

/// Long-format CSV `stage,code,dim,value` of every codebook entry.
pub fn codebooks_csv(bundle: &QuantizerBundle) -> String {
    let mut out = String::from("stage,code,dim,value\n");
    for (s, cb) in bundle.codebooks.iter().enumerate() {
        let v = cb.vectors();
        for k in 0..v.nrows() {
            for d in 0..v.ncols() {
                out.push_str(&format!("{},{},{},{}\n", s + 1, k, d, fmt_f64(v[(k, d)])));
            }
        }
    }
    out
}
