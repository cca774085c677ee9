//! Multi-modal channel and spatial fusion over three feature maps
//! (I-frame, motion vector, residual).
//!
//! Channel fusion pools each modality spatially, squeezes the concatenated
//! channel descriptor through one FC + ReLU and expands it back with one FC +
//! sigmoid per modality, then gates each modality's channels. Spatial fusion
//! pools each modality over channels, stacks the three maps and produces one
//! spatial gate per modality with a 3x3 convolution + sigmoid.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::{kaiming_uniform, Graph, ParamId, ParamStore, Tensor, TensorError, Var};

/// How channel and spatial fusion are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Arrangement {
    ChannelOnly,
    SpatialOnly,
    /// Both gates computed from the raw inputs and applied together.
    Parallel,
    SpatialThenChannel,
    #[default]
    ChannelThenSpatial,
}

impl Arrangement {
    pub const ALL: [Arrangement; 5] = [
        Arrangement::ChannelOnly,
        Arrangement::SpatialOnly,
        Arrangement::Parallel,
        Arrangement::SpatialThenChannel,
        Arrangement::ChannelThenSpatial,
    ];

    pub fn uses_channel(self) -> bool {
        self != Arrangement::SpatialOnly
    }

    pub fn uses_spatial(self) -> bool {
        self != Arrangement::ChannelOnly
    }

    /// Short label as used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Arrangement::ChannelOnly => "c",
            Arrangement::SpatialOnly => "s",
            Arrangement::Parallel => "c+s",
            Arrangement::SpatialThenChannel => "s->c",
            Arrangement::ChannelThenSpatial => "c->s",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().replace(['_', '-', ' '], "").as_str() {
            "c" | "channel" | "channelonly" => Some(Self::ChannelOnly),
            "s" | "spatial" | "spatialonly" => Some(Self::SpatialOnly),
            "c+s" | "parallel" => Some(Self::Parallel),
            "s>c" | "spatialthenchannel" => Some(Self::SpatialThenChannel),
            "c>s" | "channelthenspatial" => Some(Self::ChannelThenSpatial),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub reduction: usize,
    pub arrangement: Arrangement,
    /// Channel counts `(C_1, C_2, C_3)` of the three modalities.
    pub channels: [usize; 3],
    /// Whether the FC and conv layers carry biases.
    pub bias: bool,
}

impl FusionConfig {
    pub fn new(channels: [usize; 3]) -> Self {
        Self {
            reduction: 16,
            arrangement: Arrangement::default(),
            channels,
            bias: true,
        }
    }

    pub fn joint_channels(&self) -> usize {
        self.channels.iter().sum()
    }

    /// `max(1, floor(C_z / r))`.
    pub fn squeeze_width(&self) -> usize {
        (self.joint_channels() / self.reduction.max(1)).max(1)
    }

    /// Number of scalar parameters this configuration creates.
    pub fn param_count(&self) -> usize {
        let b = usize::from(self.bias);
        let mut n = 0;
        if self.arrangement.uses_channel() {
            let (cz, sq) = (self.joint_channels(), self.squeeze_width());
            n += cz * sq + b * sq;
            n += self.channels.iter().map(|&c| sq * c + b * c).sum::<usize>();
        }
        if self.arrangement.uses_spatial() {
            n += 3 * (3 * 9 + b);
        }
        n
    }
}

#[derive(Clone, Debug)]
pub struct ChannelFusionParams {
    pub squeeze_w: ParamId,
    pub squeeze_b: Option<ParamId>,
    pub expand_w: [ParamId; 3],
    pub expand_b: [Option<ParamId>; 3],
}

#[derive(Clone, Debug)]
pub struct SpatialFusionParams {
    /// Each `(1, 3, 3, 3)`.
    pub kernels: [ParamId; 3],
    pub biases: [Option<ParamId>; 3],
}

impl ChannelFusionParams {
    pub fn new(cfg: &FusionConfig, prefix: &str, store: &mut ParamStore, rng: &mut impl Rng) -> Self {
        let (cz, sq) = (cfg.joint_channels(), cfg.squeeze_width());
        let squeeze_w = store.add(format!("{prefix}.cf.w_c"), kaiming_uniform(&[cz, sq], cz, rng));
        let squeeze_b = cfg.bias.then(|| store.add(format!("{prefix}.cf.b_c"), Tensor::zeros(&[sq])));
        let mut expand_w = Vec::with_capacity(3);
        let mut expand_b = Vec::with_capacity(3);
        for (i, &c) in cfg.channels.iter().enumerate() {
            expand_w.push(store.add(format!("{prefix}.cf.w_{}", i + 1), kaiming_uniform(&[sq, c], sq, rng)));
            expand_b.push(cfg.bias.then(|| store.add(format!("{prefix}.cf.b_{}", i + 1), Tensor::zeros(&[c]))));
        }
        Self {
            squeeze_w,
            squeeze_b,
            expand_w: expand_w.try_into().unwrap(),
            expand_b: expand_b.try_into().unwrap(),
        }
    }
}

impl SpatialFusionParams {
    pub fn new(cfg: &FusionConfig, prefix: &str, store: &mut ParamStore, rng: &mut impl Rng) -> Self {
        let mut kernels = Vec::with_capacity(3);
        let mut biases = Vec::with_capacity(3);
        for i in 1..=3 {
            kernels.push(store.add(format!("{prefix}.sf.w_{i}"), kaiming_uniform(&[1, 3, 3, 3], 27, rng)));
            biases.push(cfg.bias.then(|| store.add(format!("{prefix}.sf.b_{i}"), Tensor::zeros(&[1]))));
        }
        Self {
            kernels: kernels.try_into().unwrap(),
            biases: biases.try_into().unwrap(),
        }
    }
}

/// One fusion block with the parameters its arrangement needs.
#[derive(Clone, Debug)]
pub struct TeamBlock {
    pub cfg: FusionConfig,
    pub channel: Option<ChannelFusionParams>,
    pub spatial: Option<SpatialFusionParams>,
}

impl TeamBlock {
    /// Registers parameters named `{prefix}.cf.*` / `{prefix}.sf.*`.
    pub fn new(cfg: FusionConfig, prefix: &str, store: &mut ParamStore, rng: &mut impl Rng) -> Self {
        let channel = cfg
            .arrangement
            .uses_channel()
            .then(|| ChannelFusionParams::new(&cfg, prefix, store, rng));
        let spatial = cfg
            .arrangement
            .uses_spatial()
            .then(|| SpatialFusionParams::new(&cfg, prefix, store, rng));
        Self { cfg, channel, spatial }
    }
}

/// Fused feature maps and the attention gates that produced them.
#[derive(Clone, Copy, Debug)]
pub struct Fused {
    pub outputs: [Var; 3],
    /// `(B, C_i)` for channel fusion, `(B, 1, H, W)` for spatial fusion.
    pub gates: [Var; 3],
}

fn check_inputs(g: &Graph, xs: [Var; 3], channels: Option<&[usize; 3]>) -> Result<(), TensorError> {
    const OP: &str = "fusion";
    let (b, _, h, w) = g.value(xs[0]).dims4(OP)?;
    for (i, &x) in xs.iter().enumerate() {
        let (bi, ci, hi, wi) = g.value(x).dims4(OP)?;
        if (bi, hi, wi) != (b, h, w) {
            return Err(TensorError::Shape {
                op: OP,
                detail: format!("modality {} is {:?}, modality 1 is {:?}", i + 1, g.value(x).shape(), g.value(xs[0]).shape()),
            });
        }
        if let Some(cs) = channels {
            if ci != cs[i] {
                return Err(TensorError::Shape {
                    op: OP,
                    detail: format!("modality {} has {ci} channels, configured for {}", i + 1, cs[i]),
                });
            }
        }
    }
    Ok(())
}

/// Channel attention gates computed from the joint channel descriptor.
fn channel_gates(g: &mut Graph, store: &ParamStore, p: &ChannelFusionParams, xs: [Var; 3]) -> Result<[Var; 3], TensorError> {
    let pooled = [g.spatial_mean(xs[0])?, g.spatial_mean(xs[1])?, g.spatial_mean(xs[2])?];
    let joint = g.concat_channels(&pooled)?;
    let w = g.param(store, p.squeeze_w);
    let b = p.squeeze_b.map(|b| g.param(store, b));
    let squeezed = g.fully_connected(joint, w, b)?;
    let squeezed = g.relu(squeezed)?;
    let mut gates = [squeezed; 3];
    for i in 0..3 {
        let w = g.param(store, p.expand_w[i]);
        let b = p.expand_b[i].map(|b| g.param(store, b));
        let z = g.fully_connected(squeezed, w, b)?;
        gates[i] = g.sigmoid(z)?;
    }
    Ok(gates)
}

/// Spatial attention gates computed from the stacked channel-mean maps.
fn spatial_gates(g: &mut Graph, store: &ParamStore, p: &SpatialFusionParams, xs: [Var; 3]) -> Result<[Var; 3], TensorError> {
    let pooled = [g.channel_mean(xs[0])?, g.channel_mean(xs[1])?, g.channel_mean(xs[2])?];
    let joint = g.concat_channels(&pooled)?;
    let mut gates = [joint; 3];
    for i in 0..3 {
        let k = g.param(store, p.kernels[i]);
        let b = p.biases[i].map(|b| g.param(store, b));
        let z = g.conv2d(joint, k, b, 1, 1)?;
        gates[i] = g.sigmoid(z)?;
    }
    Ok(gates)
}

fn apply(g: &mut Graph, xs: [Var; 3], gates: [Var; 3]) -> Result<[Var; 3], TensorError> {
    Ok([
        g.mul_broadcast(xs[0], gates[0])?,
        g.mul_broadcast(xs[1], gates[1])?,
        g.mul_broadcast(xs[2], gates[2])?,
    ])
}

pub fn channel_fusion(g: &mut Graph, store: &ParamStore, p: &ChannelFusionParams, xs: [Var; 3]) -> Result<Fused, TensorError> {
    check_inputs(g, xs, None)?;
    let gates = channel_gates(g, store, p, xs)?;
    Ok(Fused {
        outputs: apply(g, xs, gates)?,
        gates,
    })
}

pub fn spatial_fusion(g: &mut Graph, store: &ParamStore, p: &SpatialFusionParams, xs: [Var; 3]) -> Result<Fused, TensorError> {
    check_inputs(g, xs, None)?;
    let gates = spatial_gates(g, store, p, xs)?;
    Ok(Fused {
        outputs: apply(g, xs, gates)?,
        gates,
    })
}

/// Runs a fusion block in its configured arrangement.
pub fn team_forward(g: &mut Graph, store: &ParamStore, block: &TeamBlock, xs: [Var; 3]) -> Result<[Var; 3], TensorError> {
    check_inputs(g, xs, Some(&block.cfg.channels))?;
    let cf = || {
        block.channel.as_ref().ok_or(TensorError::Shape {
            op: "team_forward",
            detail: "block has no channel-fusion parameters".into(),
        })
    };
    let sf = || {
        block.spatial.as_ref().ok_or(TensorError::Shape {
            op: "team_forward",
            detail: "block has no spatial-fusion parameters".into(),
        })
    };
    match block.cfg.arrangement {
        Arrangement::ChannelOnly => Ok(channel_fusion(g, store, cf()?, xs)?.outputs),
        Arrangement::SpatialOnly => Ok(spatial_fusion(g, store, sf()?, xs)?.outputs),
        Arrangement::ChannelThenSpatial => {
            let c = channel_fusion(g, store, cf()?, xs)?;
            Ok(spatial_fusion(g, store, sf()?, c.outputs)?.outputs)
        }
        Arrangement::SpatialThenChannel => {
            let s = spatial_fusion(g, store, sf()?, xs)?;
            Ok(channel_fusion(g, store, cf()?, s.outputs)?.outputs)
        }
        Arrangement::Parallel => {
            let zc = channel_gates(g, store, cf()?, xs)?;
            let zs = spatial_gates(g, store, sf()?, xs)?;
            let gated = apply(g, xs, zc)?;
            apply(g, gated, zs)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn squeeze_width_floor_min_one() {
        let mut c = FusionConfig::new([16, 8, 8]);
        assert_eq!(c.squeeze_width(), 2);
        c.channels = [4, 2, 2];
        assert_eq!(c.squeeze_width(), 1);
        c.reduction = 2;
        assert_eq!(c.squeeze_width(), 4);
    }

    #[test]
    fn param_count_matches_store() {
        for arr in Arrangement::ALL {
            for bias in [true, false] {
                let mut cfg = FusionConfig::new([6, 3, 4]);
                cfg.arrangement = arr;
                cfg.bias = bias;
                cfg.reduction = 4;
                let mut store = ParamStore::new();
                TeamBlock::new(cfg, "team1", &mut store, &mut ChaCha8Rng::seed_from_u64(0));
                assert_eq!(store.scalar_count(), cfg.param_count(), "{arr:?} bias={bias}");
            }
        }
    }

    #[test]
    fn parameter_names() {
        let mut store = ParamStore::new();
        TeamBlock::new(FusionConfig::new([4, 2, 2]), "team3", &mut store, &mut ChaCha8Rng::seed_from_u64(0));
        let names: Vec<_> = store.iter().map(|(_, p)| p.name.clone()).collect();
        assert_eq!(
            names,
            [
                "team3.cf.w_c", "team3.cf.b_c", "team3.cf.w_1", "team3.cf.b_1", "team3.cf.w_2", "team3.cf.b_2",
                "team3.cf.w_3", "team3.cf.b_3", "team3.sf.w_1", "team3.sf.b_1", "team3.sf.w_2", "team3.sf.b_2",
                "team3.sf.w_3", "team3.sf.b_3"
            ]
        );
    }

    #[test]
    fn arrangement_parse_round_trip() {
        for a in Arrangement::ALL {
            assert_eq!(Arrangement::parse(a.label()), Some(a));
            assert_eq!(Arrangement::parse(&format!("{a:?}")), Some(a));
        }
        assert_eq!(Arrangement::parse("bogus"), None);
    }

    #[test]
    fn mismatched_spatial_dims_rejected() {
        let mut store = ParamStore::new();
        let block = TeamBlock::new(FusionConfig::new([2, 1, 1]), "t", &mut store, &mut ChaCha8Rng::seed_from_u64(0));
        let mut g = Graph::new();
        let a = g.input(Tensor::zeros(&[1, 2, 4, 4])).unwrap();
        let b = g.input(Tensor::zeros(&[1, 1, 4, 4])).unwrap();
        let c = g.input(Tensor::zeros(&[1, 1, 2, 4])).unwrap();
        assert!(team_forward(&mut g, &store, &block, [a, b, c]).is_err());
        let d = g.input(Tensor::zeros(&[1, 3, 4, 4])).unwrap();
        assert!(team_forward(&mut g, &store, &block, [a, b, d]).is_err());
    }
}
