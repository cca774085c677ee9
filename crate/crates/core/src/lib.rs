//! Compressed-domain video classification: a lossless GOP codec, GOP-level
//! clip sampling, an `f64` autodiff tape, multi-modal fusion blocks, the
//! three-pathway network and an experiment harness.

pub mod codec;
pub mod fusion;
pub mod harness;
pub mod network;
pub mod sampler;
pub mod tensor;
