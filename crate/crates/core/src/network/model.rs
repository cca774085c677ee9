use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{NetworkConfig, NetworkError, MODALITIES};
use crate::fusion::{team_forward, TeamBlock};
use crate::sampler::ClipBatch;
use crate::tensor::{kaiming_uniform, load_params, save_params, Graph, ParamId, ParamStore, Tensor, Var};

/// Convolution weight and bias ids.
#[derive(Clone, Copy, Debug)]
pub struct ConvParams {
    pub weight: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Debug)]
pub struct PathwayParams {
    pub conv1: ConvParams,
    /// Blocks of stages 2 to 5.
    pub stages: [Vec<ConvParams>; 4],
    pub fc_weight: ParamId,
    pub fc_bias: ParamId,
}

/// Graph nodes produced by one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardOut {
    /// `(N, K)` clip logits.
    pub logits: Var,
    /// `(N * T, K)` logits before the temporal mean.
    pub frame_logits: Var,
    /// Per-pathway `(N * T, K)` logits.
    pub pathway_logits: [Option<Var>; 3],
    /// Per-pathway final feature maps `(N * T, C, h, w)`.
    pub features: [Option<Var>; 3],
}

#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: NetworkConfig,
    pub params: ParamStore,
    pub pathways: [Option<PathwayParams>; 3],
    /// `(stage, block)` pairs in stage order.
    pub teams: Vec<(usize, TeamBlock)>,
}

fn conv(store: &mut ParamStore, name: &str, cin: usize, cout: usize, rng: &mut ChaCha8Rng) -> ConvParams {
    ConvParams {
        weight: store.add(format!("{name}.weight"), kaiming_uniform(&[cout, cin, 3, 3], cin * 9, rng)),
        bias: store.add(format!("{name}.bias"), Tensor::zeros(&[cout])),
    }
}

impl Model {
    /// Builds a model with weights drawn from `seed`.
    pub fn new(cfg: NetworkConfig, seed: u64) -> Result<Self, NetworkError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut pathways: [Option<PathwayParams>; 3] = [None, None, None];
        for (i, slot) in pathways.iter_mut().enumerate() {
            if !cfg.modalities[i] {
                continue;
            }
            let pc = &cfg.pathways[i];
            let m = MODALITIES[i];
            let c = pc.stage_channels;
            let conv1 = conv(&mut store, &format!("{m}.conv1"), pc.input_channels, c[0], &mut rng);
            let mut stages: [Vec<ConvParams>; 4] = Default::default();
            let mut cin = c[0];
            for (s, blocks) in stages.iter_mut().enumerate() {
                for b in 0..pc.blocks_per_stage[s] {
                    blocks.push(conv(&mut store, &format!("{m}.stage{}.{b}", s + 2), cin, c[s + 1], &mut rng));
                    cin = c[s + 1];
                }
            }
            let k = cfg.num_classes;
            let fc_weight = store.add(format!("{m}.fc.weight"), kaiming_uniform(&[cin, k], cin, &mut rng));
            let fc_bias = store.add(format!("{m}.fc.bias"), Tensor::zeros(&[k]));
            *slot = Some(PathwayParams {
                conv1,
                stages,
                fc_weight,
                fc_bias,
            });
        }
        let teams = cfg
            .insertion_stages
            .iter()
            .map(|&s| (s, TeamBlock::new(cfg.fusion_config(s), &format!("team{s}"), &mut store, &mut rng)))
            .collect::<Vec<_>>();
        let g0 = cfg.team.gate_bias_init;
        for (_, block) in &teams {
            let channel = block.channel.iter().flat_map(|c| c.expand_b);
            let spatial = block.spatial.iter().flat_map(|s| s.biases);
            for id in channel.chain(spatial).flatten() {
                store.value_mut(id).data_mut().fill(g0);
            }
        }
        Ok(Self {
            cfg,
            params: store,
            pathways,
            teams,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    fn conv_relu(&self, g: &mut Graph, x: Var, p: ConvParams, stride: usize) -> Result<Var, NetworkError> {
        let w = g.param(&self.params, p.weight);
        let b = g.param(&self.params, p.bias);
        let y = g.conv2d(x, w, Some(b), stride, 1)?;
        Ok(g.relu(y)?)
    }

    fn stage(&self, g: &mut Graph, p: &PathwayParams, stage: usize, x: Var) -> Result<Var, NetworkError> {
        if stage == 1 {
            let y = self.conv_relu(g, x, p.conv1, 2)?;
            return Ok(g.max_pool_3x3_s2(y)?);
        }
        let mut y = x;
        for (b, &cp) in p.stages[stage - 2].iter().enumerate() {
            let stride = if b == 0 && stage >= 3 { 2 } else { 1 };
            y = self.conv_relu(g, y, cp, stride)?;
        }
        Ok(y)
    }

    /// Runs the network on `(N * T, C, H, W)` inputs, one per modality. Inputs
    /// for disabled pathways are ignored and may be `None`.
    pub fn forward(&self, g: &mut Graph, inputs: [Option<Var>; 3], t: usize) -> Result<ForwardOut, NetworkError> {
        let mut xs: [Option<Var>; 3] = [None; 3];
        for i in 0..3 {
            if self.pathways[i].is_some() {
                let v = inputs[i].ok_or_else(|| NetworkError::Batch(format!("missing {} input", MODALITIES[i])))?;
                let (_, c, _, _) = g.value(v).dims4("forward")?;
                if c != self.cfg.pathways[i].input_channels {
                    return Err(NetworkError::Batch(format!("{} input has {c} channels", MODALITIES[i])));
                }
                xs[i] = Some(v);
            }
        }
        let mut team = self.teams.iter().peekable();
        for stage in 1..=5 {
            for i in 0..3 {
                if let (Some(p), Some(x)) = (&self.pathways[i], xs[i]) {
                    xs[i] = Some(self.stage(g, p, stage, x)?);
                }
            }
            if let Some((_, block)) = team.next_if(|(s, _)| *s == stage) {
                let fused = team_forward(g, &self.params, block, [0, 1, 2].map(|i| xs[i].expect("all pathways on")))?;
                xs = fused.map(Some);
            }
        }
        let mut pathway_logits = [None; 3];
        for i in 0..3 {
            if let (Some(p), Some(x)) = (&self.pathways[i], xs[i]) {
                let pooled = g.global_avg_pool(x)?;
                let w = g.param(&self.params, p.fc_weight);
                let b = g.param(&self.params, p.fc_bias);
                pathway_logits[i] = Some(g.fully_connected(pooled, w, Some(b))?);
            }
        }
        let active: Vec<Var> = pathway_logits.iter().flatten().copied().collect();
        let frame_logits = g.mean_of(&active)?;
        let logits = g.temporal_mean(frame_logits, t)?;
        Ok(ForwardOut {
            logits,
            frame_logits,
            pathway_logits,
            features: xs,
        })
    }

    /// Adds a batch's tensors to `g` and runs [`Model::forward`].
    pub fn forward_batch(&self, g: &mut Graph, batch: &ClipBatch) -> Result<ForwardOut, NetworkError> {
        let mut inputs = [None; 3];
        for (i, x) in [&batch.x_i, &batch.x_mv, &batch.x_res].into_iter().enumerate() {
            if self.pathways[i].is_some() {
                inputs[i] = Some(g.input(x.clone())?);
            }
        }
        self.forward(g, inputs, batch.t)
    }

    /// `(N, K)` logits for a batch.
    pub fn logits(&self, batch: &ClipBatch) -> Result<Tensor, NetworkError> {
        let mut g = Graph::new();
        let out = self.forward_batch(&mut g, batch)?;
        Ok(g.value(out.logits).clone())
    }

    pub fn save(&self, path: &Path) -> Result<(), NetworkError> {
        Ok(save_params(&self.params, path)?)
    }

    /// Builds the model for `cfg` and loads weights saved by [`Model::save`].
    pub fn load(cfg: NetworkConfig, path: &Path) -> Result<Self, NetworkError> {
        let mut m = Self::new(cfg, 0)?;
        m.params.load_values(load_params(path)?)?;
        Ok(m)
    }
}
