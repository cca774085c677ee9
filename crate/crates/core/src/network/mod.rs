//! Three-pathway backbone with fusion blocks between stages.
//!
//! Each pathway is `conv1 (stride 2) -> max pool (stride 2)` followed by four
//! stages of plain `conv 3x3 + ReLU` blocks, the first block of stages 3 to 5
//! striding by 2. After every stage listed in `insertion_stages` the three
//! pathways pass through one fusion block. Each pathway ends in global average
//! pooling and a linear head; the three per-frame logits are averaged, then
//! averaged over time.

mod data;
mod model;
mod train;

pub use data::Dataset;
pub use model::{ForwardOut, Model, PathwayParams};
pub use train::{evaluate, predict_label, train, train_step, EpochLog, EvalReport, TrainConfig};

use serde::{Deserialize, Serialize};

use crate::codec::CodecError;
use crate::fusion::Arrangement;
use crate::sampler::SamplerError;
use crate::tensor::TensorError;

pub const MODALITIES: [&str; 3] = ["iframe", "mv", "residual"];

#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error("invalid network config: {0}")]
    Config(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("non-finite loss at epoch {epoch}, step {step}: {detail}")]
    NonFinite { epoch: usize, step: usize, detail: String },
    #[error("batch does not match the model: {0}")]
    Batch(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathwayConfig {
    /// Output channels after conv1 and after stages 2 to 5.
    pub stage_channels: [usize; 5],
    /// Conv blocks in stages 2 to 5.
    pub blocks_per_stage: [usize; 4],
    pub input_channels: usize,
}

impl PathwayConfig {
    pub fn iframe() -> Self {
        Self {
            stage_channels: [16, 32, 64, 128, 256],
            blocks_per_stage: [1; 4],
            input_channels: 3,
        }
    }

    pub fn motion() -> Self {
        Self {
            stage_channels: [8, 16, 32, 64, 128],
            blocks_per_stage: [1; 4],
            input_channels: 2,
        }
    }

    pub fn residual() -> Self {
        Self {
            input_channels: 3,
            ..Self::motion()
        }
    }

    /// Closed-form parameter count for `classes` outputs.
    pub fn param_count(&self, classes: usize) -> usize {
        let c = self.stage_channels;
        let mut n = self.input_channels * c[0] * 9 + c[0];
        let mut cin = c[0];
        for (s, &blocks) in self.blocks_per_stage.iter().enumerate() {
            let cout = c[s + 1];
            n += cin * cout * 9 + cout;
            n += (blocks - 1) * (cout * cout * 9 + cout);
            cin = cout;
        }
        n + cin * classes + classes
    }
}

/// Fusion settings shared by every inserted block; channel counts come from
/// the pathways.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeamSettings {
    pub reduction: usize,
    pub arrangement: Arrangement,
    pub bias: bool,
    /// Initial value of every gate bias. Without normalization layers, gates
    /// starting at 0.5 shrink activations geometrically with depth.
    pub gate_bias_init: f64,
}

impl Default for TeamSettings {
    fn default() -> Self {
        Self {
            reduction: 16,
            arrangement: Arrangement::ChannelThenSpatial,
            bias: true,
            gate_bias_init: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// I-frame, MV and residual pathways in that order.
    pub pathways: [PathwayConfig; 3],
    /// Stages (1 to 5) followed by a fusion block; stage 1 is conv1 + pool.
    pub insertion_stages: Vec<usize>,
    pub team: TeamSettings,
    pub num_classes: usize,
    /// Which pathways exist. Disabling any requires no fusion blocks.
    pub modalities: [bool; 3],
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            pathways: [PathwayConfig::iframe(), PathwayConfig::motion(), PathwayConfig::residual()],
            insertion_stages: vec![1, 2, 3, 4],
            team: TeamSettings::default(),
            num_classes: 8,
            modalities: [true; 3],
        }
    }
}

impl NetworkConfig {
    /// I-frame pathway alone, no fusion.
    pub fn iframe_only(mut self) -> Self {
        self.modalities = [true, false, false];
        self.insertion_stages.clear();
        self
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        let err = |m: String| Err(NetworkError::Config(m));
        if self.num_classes == 0 {
            return err("num_classes must be positive".into());
        }
        if !self.modalities.iter().any(|&m| m) {
            return err("at least one modality must be enabled".into());
        }
        let mut prev = 0;
        for &s in &self.insertion_stages {
            if !(1..=5).contains(&s) || s <= prev {
                return err(format!(
                    "insertion stages must be increasing values in 1..=5, got {:?}",
                    self.insertion_stages
                ));
            }
            prev = s;
        }
        if !self.insertion_stages.is_empty() && !self.modalities.iter().all(|&m| m) {
            return err("fusion blocks need all three modalities".into());
        }
        if self.team.reduction == 0 {
            return err("reduction must be at least 1".into());
        }
        let expected_in = [3, 2, 3];
        for (i, p) in self.pathways.iter().enumerate() {
            if p.input_channels != expected_in[i] {
                return err(format!("{} pathway takes {} input channels", MODALITIES[i], expected_in[i]));
            }
            if p.stage_channels.contains(&0) || p.blocks_per_stage.contains(&0) {
                return err(format!("{} pathway has a zero width or block count", MODALITIES[i]));
            }
        }
        let [ip, mp, rp] = &self.pathways;
        for s in 0..5 {
            if ip.stage_channels[s] < mp.stage_channels[s] || ip.stage_channels[s] < rp.stage_channels[s] {
                return err(format!("I-frame pathway must be at least as wide as the others at stage {}", s + 1));
            }
        }
        Ok(())
    }

    /// Spatial size after conv1, the pool, and stages 2 to 5.
    pub fn stage_dims(input: usize) -> Result<[usize; 6], NetworkError> {
        let down = |n: usize| (n + 2 - 3) / 2 + 1;
        if input == 0 {
            return Err(NetworkError::Config(format!("input size {input} is too small")));
        }
        let c1 = down(input);
        let p = down(c1);
        let s3 = down(p);
        let s4 = down(s3);
        let s5 = down(s4);
        Ok([c1, p, p, s3, s4, s5])
    }

    /// Closed-form parameter count of the built model.
    pub fn param_count(&self) -> usize {
        let mut n: usize = self
            .pathways
            .iter()
            .zip(self.modalities)
            .filter(|(_, on)| *on)
            .map(|(p, _)| p.param_count(self.num_classes))
            .sum();
        for &s in &self.insertion_stages {
            n += self.fusion_config(s).param_count();
        }
        n
    }

    pub fn fusion_config(&self, stage: usize) -> crate::fusion::FusionConfig {
        crate::fusion::FusionConfig {
            reduction: self.team.reduction,
            arrangement: self.team.arrangement,
            channels: [0, 1, 2].map(|i| self.pathways[i].stage_channels[stage - 1]),
            bias: self.team.bias,
        }
    }
}
