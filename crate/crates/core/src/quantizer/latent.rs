use crate::error::{Error, Result};
use crate::linalg::{all_finite, Matrix};

/// Time-major matrix of latent frames (`T × D`).
#[derive(Clone, Debug, PartialEq)]
pub struct LatentSequence {
    pub frames: Matrix,
    /// Frames per second; informational only.
    pub frame_rate: f64,
}

impl LatentSequence {
    pub fn new(frames: Matrix, frame_rate: f64) -> Result<Self> {
        if !all_finite(&frames) {
            return Err(Error::NonFinite("latent frames"));
        }
        Ok(Self { frames, frame_rate })
    }

    pub fn from_frames(frames: Matrix) -> Result<Self> {
        Self::new(frames, 0.0)
    }

    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }
}
