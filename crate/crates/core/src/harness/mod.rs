//! Experiment plumbing: synthetic data, ablation runners, CAM export, decode
//! benchmark, run configuration and reports.

pub mod bench;
pub mod cam;
pub mod config;
pub mod experiment;
pub mod files;
pub mod report;
pub mod synth;

use crate::codec::CodecError;
use crate::network::NetworkError;
use crate::sampler::SamplerError;
use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("cam: {0}")]
    Cam(String),
    #[error("png: {0}")]
    PngEncode(#[from] png::EncodingError),
    #[error("png: {0}")]
    PngDecode(#[from] png::DecodingError),
}

impl HarnessError {
    /// Whether the error comes from bad input (configuration, arguments,
    /// malformed files) rather than a failure while running.
    pub fn is_validation(&self) -> bool {
        use crate::tensor::TensorError as T;
        let sampler = |e: &SamplerError| !matches!(e, SamplerError::Io(_));
        match self {
            HarnessError::Config(_) | HarnessError::Codec(_) | HarnessError::Json(_) | HarnessError::PngDecode(_) => true,
            HarnessError::Sampler(e) => sampler(e),
            HarnessError::Network(e) => match e {
                NetworkError::Config(_) | NetworkError::EmptyDataset | NetworkError::Batch(_) | NetworkError::Codec(_) => true,
                NetworkError::Sampler(e) => sampler(e),
                NetworkError::Tensor(T::Checkpoint(_) | T::Label { .. } | T::Shape { .. }) => true,
                _ => false,
            },
            HarnessError::Tensor(T::Checkpoint(_)) => true,
            _ => false,
        }
    }
}
