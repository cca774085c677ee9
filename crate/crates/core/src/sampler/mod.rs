//! GOP-level clip sampling and model-input preprocessing.
//!
//! A video is split into `T` segments of consecutive GOPs. Training draws one
//! GOP per segment and one P-frame inside it; testing takes the centre GOP of
//! each segment and its middle P-frame. Every sampled time step contributes an
//! I-frame, a per-pixel motion field and a residual, all cropped with the same
//! window.

mod clip;
mod manifest;
mod preprocess;

pub use clip::{sample_test_clips, sample_train_clip, segment_ranges, ClipSample, ClipStep, CropWindow, StepOrigin};
pub use manifest::{read_manifest, write_manifest, ManifestEntry};
pub use preprocess::{preprocess, ClipBatch, Normalization};

use serde::{Deserialize, Serialize};

use crate::codec::CodecError;

#[derive(Debug, thiserror::Error)]
pub enum SamplerError {
    #[error("stream has no GOPs")]
    EmptyStream,
    #[error("segment count must be at least 1")]
    NoSegments,
    #[error("crop {crop} exceeds frame {width}x{height}")]
    CropTooLarge { crop: usize, width: usize, height: usize },
    #[error("clips have inconsistent sizes: {0}")]
    Inconsistent(String),
    #[error("invalid scale range [{0}, {1}]")]
    ScaleRange(f64, f64),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Training segments per clip (`T`).
    pub segments: usize,
    /// Square crop side in pixels.
    pub crop: usize,
    pub test_segments: usize,
    pub seed: u64,
    /// Scale jitter range applied before the random training crop.
    pub scale_min: f64,
    pub scale_max: f64,
    /// Feed MV/residual accumulated back to the I-frame (default) rather than
    /// the single P-frame step.
    pub accumulate: bool,
    pub norm: Normalization,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            segments: 8,
            crop: 64,
            test_segments: 25,
            seed: 0,
            scale_min: 0.8,
            scale_max: 1.2,
            accumulate: true,
            norm: Normalization::default(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.segments == 0 || self.test_segments == 0 {
            return Err(SamplerError::NoSegments);
        }
        if !(self.scale_min > 0.0 && self.scale_min <= self.scale_max && self.scale_max.is_finite()) {
            return Err(SamplerError::ScaleRange(self.scale_min, self.scale_max));
        }
        Ok(())
    }
}
