use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::{MelConfig, DEFAULT_STFT_RESOLUTIONS};
use crate::error::{Error, Result};
use crate::losses::{LossWeights, SyntheticTeacher};
use crate::quantizer::{QuantizerKind, VoRvqConfig};

/// Whether the pipeline runs on latent frames or on framed waveforms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Latent,
    Waveform,
}

/// Bottleneck between encoder and decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Continuous,
    Rvq,
    VoRvq,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Continuous, Variant::Rvq, Variant::VoRvq];

    pub fn kind(self) -> Option<QuantizerKind> {
        match self {
            Variant::Continuous => None,
            Variant::Rvq => Some(QuantizerKind::Rvq),
            Variant::VoRvq => Some(QuantizerKind::VoRvq),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Continuous => "continuous",
            Variant::Rvq => "rvq",
            Variant::VoRvq => "vo_rvq",
        }
    }
}

/// Waveform-mode data and spectral loss settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaveformConfig {
    pub sample_rate: f64,
    pub snr_db: f64,
    pub mel: MelConfig,
    pub stft_resolutions: Vec<(usize, usize)>,
}

impl Default for WaveformConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16000.0,
            snr_db: 6.0,
            mel: MelConfig::default(),
            stft_resolutions: DEFAULT_STFT_RESOLUTIONS.to_vec(),
        }
    }
}

/// Seeds for every random stream an experiment draws from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Seeds {
    /// Fixed clean loading shared by training and evaluation data.
    pub world: u64,
    /// Training batches.
    pub data: u64,
    /// Encoder, decoder, alignment projection and codebook initialization.
    pub model: u64,
    /// Frozen teacher.
    pub teacher: u64,
    /// Held-out evaluation batch.
    pub eval: u64,
    /// Spectral clustering.
    pub cluster: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            world: 7,
            data: 1,
            model: 2,
            teacher: 3,
            eval: 4,
            cluster: 5,
        }
    }
}

/// Everything needed to reproduce one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub quantizer: Variant,
    pub vorvq: VoRvqConfig,
    pub weights: LossWeights,
    /// Input frame width (`D_in`); in waveform mode, samples per frame.
    pub input_dim: usize,
    /// Encoder output width (`D_latent`); must equal `vorvq.latent_dim`.
    pub latent_dim: usize,
    pub rank_clean: usize,
    pub variance_ratio: f64,
    pub teacher_dim: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub frames_per_item: usize,
    pub learning_rate: f64,
    pub log_every: usize,
    pub dead_code_threshold: u32,
    pub train_out_bias: bool,
    pub eval_frames: usize,
    pub seeds: Seeds,
    pub waveform: WaveformConfig,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Latent,
            quantizer: Variant::VoRvq,
            vorvq: VoRvqConfig::new(5, 4, 16, 16, 64, 0).expect("default quantizer config is valid"),
            weights: LossWeights {
                lambda_align: 0.0,
                ..LossWeights::default()
            },
            input_dim: 32,
            latent_dim: 16,
            rank_clean: 8,
            variance_ratio: 4.0,
            teacher_dim: SyntheticTeacher::DEFAULT_DIM,
            steps: 2000,
            batch_size: 32,
            frames_per_item: 64,
            learning_rate: 0.05,
            log_every: 20,
            dead_code_threshold: 2,
            train_out_bias: false,
            eval_frames: 2000,
            seeds: Seeds::default(),
            waveform: WaveformConfig::default(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        Self {
            quantizer: variant,
            ..self.clone()
        }
    }

    pub fn frames_per_batch(&self) -> usize {
        self.batch_size * self.frames_per_item
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        self.vorvq.validate()?;
        self.weights.validate()?;
        if self.weights.lambda_adv != 0.0 {
            return bad("lambda_adv must be 0: no adversarial term is available".into());
        }
        if self.input_dim == 0 || self.latent_dim == 0 {
            return bad("input_dim and latent_dim must be positive".into());
        }
        if self.vorvq.latent_dim != self.latent_dim {
            return bad(format!(
                "vorvq.latent_dim {} differs from latent_dim {}",
                self.vorvq.latent_dim, self.latent_dim
            ));
        }
        if self.rank_clean == 0 || self.rank_clean > self.input_dim {
            return bad(format!("rank_clean must be in 1..={}", self.input_dim));
        }
        if !(self.variance_ratio > 0.0) {
            return bad("variance_ratio must be positive".into());
        }
        if self.batch_size == 0 || self.frames_per_item == 0 {
            return bad("batch_size and frames_per_item must be positive".into());
        }
        if self.teacher_dim == 0 {
            return bad("teacher_dim must be positive".into());
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate must be ≥ 0, got {}", self.learning_rate));
        }
        if self.log_every == 0 {
            return bad("log_every must be positive".into());
        }
        if self.dead_code_threshold == 0 {
            return bad("dead_code_threshold must be ≥ 1".into());
        }
        if self.quantizer != Variant::Continuous {
            let k_max = self.vorvq.codebook_sizes.iter().copied().max().unwrap_or(0);
            if self.frames_per_batch() < k_max {
                return bad(format!(
                    "a batch of {} frames cannot seed codebooks of {k_max} codes",
                    self.frames_per_batch()
                ));
            }
        }
        if self.mode == Mode::Waveform {
            self.waveform.mel.validate()?;
            if self.waveform.mel.sample_rate != self.waveform.sample_rate {
                return bad("waveform.mel.sample_rate must equal waveform.sample_rate".into());
            }
            let len = self.frames_per_item * self.input_dim;
            let longest = self
                .waveform
                .stft_resolutions
                .iter()
                .map(|r| r.0)
                .chain([self.waveform.mel.n_fft])
                .max()
                .unwrap_or(0);
            if len < longest {
                return bad(format!(
                    "waveform items of {len} samples are shorter than n_fft {longest}"
                ));
            }
        }
        Ok(())
    }
}
