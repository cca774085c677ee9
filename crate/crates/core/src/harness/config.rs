//! INI run configuration with `[codec]`, `[sampler]`, `[network]`, `[train]`
//! and `[synth]` sections. Missing keys keep their defaults; unknown sections
//! or keys are errors.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use ini::Ini;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::synth::{color_shift_classes, direction_classes, SynthSpec};
use super::HarnessError;
use crate::codec::CodecParams;
use crate::fusion::Arrangement;
use crate::network::{NetworkConfig, PathwayConfig, TrainConfig};
use crate::sampler::SamplerConfig;

/// Options for the synthetic dataset that are not part of [`SynthSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub speeds: Vec<i32>,
    /// Brightness step of the two optional colour-shift classes; 0 disables them.
    pub color_shift: i32,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            speeds: vec![1, 4],
            color_shift: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub codec: CodecParams,
    pub sampler: SamplerConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub synth: SynthSpec,
    pub synth_options: SynthOptions,
    /// Videos per forward pass during evaluation.
    pub eval_batch: usize,
}

impl Default for RunConfig {
    /// Desk-scale setup: 64x64 frames, 4 segments, narrow pathways.
    fn default() -> Self {
        let codec = CodecParams {
            gop_size: 4,
            block_size: 16,
            search_range: 4,
        };
        let mut network = NetworkConfig::default();
        network.pathways[0].stage_channels = [8, 16, 32, 32, 32];
        network.pathways[1].stage_channels = [8, 16, 16, 16, 16];
        network.pathways[2].stage_channels = [8, 16, 16, 16, 16];
        let opts = SynthOptions::default();
        let synth = SynthSpec {
            codec,
            classes: direction_classes(&opts.speeds),
            ..SynthSpec::default()
        };
        network.num_classes = synth.classes.len();
        Self {
            codec,
            sampler: SamplerConfig {
                segments: 4,
                test_segments: 4,
                crop: 64,
                ..SamplerConfig::default()
            },
            network,
            train: TrainConfig {
                epochs: 6,
                milestones: vec![4],
                ..TrainConfig::default()
            },
            synth,
            synth_options: opts,
            eval_batch: 8,
        }
    }
}

type Sections = BTreeMap<String, BTreeMap<String, String>>;

struct Reader {
    sections: Sections,
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, HarnessError> {
    let v = v.trim();
    if v.is_empty() || v.eq_ignore_ascii_case("none") {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| HarnessError::Config(format!("{key}: cannot parse list item {s:?}")))
        })
        .collect()
}

fn parse_array<T: FromStr + Copy, const N: usize>(key: &str, v: &str) -> Result<[T; N], HarnessError> {
    let items = parse_list::<T>(key, v)?;
    items
        .try_into()
        .map_err(|_| HarnessError::Config(format!("{key}: expected {N} comma-separated values")))
}

impl Reader {
    fn take(&mut self, section: &str, key: &str) -> Option<String> {
        self.sections.get_mut(section)?.remove(key)
    }

    fn set<T: FromStr>(&mut self, section: &str, key: &str, dst: &mut T) -> Result<(), HarnessError> {
        if let Some(v) = self.take(section, key) {
            *dst = v
                .trim()
                .parse()
                .map_err(|_| HarnessError::Config(format!("[{section}] {key}: cannot parse {v:?}")))?;
        }
        Ok(())
    }

    fn set_with<T>(
        &mut self,
        section: &str,
        key: &str,
        dst: &mut T,
        f: impl FnOnce(&str, &str) -> Result<T, HarnessError>,
    ) -> Result<(), HarnessError> {
        if let Some(v) = self.take(section, key) {
            *dst = f(&format!("[{section}] {key}"), &v)?;
        }
        Ok(())
    }

    fn leftovers(&self) -> Option<String> {
        self.sections
            .iter()
            .flat_map(|(s, keys)| keys.keys().map(move |k| format!("[{s}] {k}")))
            .next()
    }
}

impl RunConfig {
    pub fn from_ini_str(text: &str) -> Result<Self, HarnessError> {
        let ini = Ini::load_from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        let mut sections = Sections::new();
        for (name, props) in ini.iter() {
            let Some(name) = name else {
                if props.iter().next().is_some() {
                    return Err(HarnessError::Config("keys outside a section".into()));
                }
                continue;
            };
            if !["codec", "sampler", "network", "train", "synth"].contains(&name) {
                return Err(HarnessError::Config(format!("unknown section [{name}]")));
            }
            let entry = sections.entry(name.to_string()).or_default();
            for (k, v) in props.iter() {
                entry.insert(k.to_string(), v.to_string());
            }
        }
        let mut r = Reader { sections };
        let mut c = RunConfig::default();

        r.set("codec", "gop_size", &mut c.codec.gop_size)?;
        r.set("codec", "block_size", &mut c.codec.block_size)?;
        r.set("codec", "search_range", &mut c.codec.search_range)?;

        let s = &mut c.sampler;
        r.set("sampler", "segments", &mut s.segments)?;
        r.set("sampler", "crop", &mut s.crop)?;
        r.set("sampler", "test_segments", &mut s.test_segments)?;
        r.set("sampler", "seed", &mut s.seed)?;
        r.set("sampler", "scale_min", &mut s.scale_min)?;
        r.set("sampler", "scale_max", &mut s.scale_max)?;
        r.set("sampler", "accumulate", &mut s.accumulate)?;
        r.set_with("sampler", "mean", &mut s.norm.mean, parse_array)?;
        r.set_with("sampler", "std", &mut s.norm.std, parse_array)?;

        let n = &mut c.network;
        r.set_with("network", "arrangement", &mut n.team.arrangement, |k, v| {
            Arrangement::parse(v).ok_or_else(|| HarnessError::Config(format!("{k}: unknown arrangement {v:?}")))
        })?;
        r.set_with("network", "insertion_stages", &mut n.insertion_stages, parse_list)?;
        r.set("network", "reduction", &mut n.team.reduction)?;
        r.set("network", "bias", &mut n.team.bias)?;
        r.set("network", "gate_bias_init", &mut n.team.gate_bias_init)?;
        let mut classes: Option<usize> = None;
        r.set_with("network", "num_classes", &mut classes, |k, v| {
            v.trim()
                .parse()
                .map(Some)
                .map_err(|_| HarnessError::Config(format!("{k}: cannot parse {v:?}")))
        })?;
        for (i, key) in ["iframe_channels", "mv_channels", "residual_channels"].into_iter().enumerate() {
            r.set_with("network", key, &mut n.pathways[i].stage_channels, parse_array)?;
        }
        let mut blocks = n.pathways[0].blocks_per_stage;
        r.set_with("network", "blocks_per_stage", &mut blocks, parse_array)?;
        for p in &mut n.pathways {
            p.blocks_per_stage = blocks;
        }
        let mut modalities: Option<Vec<String>> = None;
        r.set_with("network", "modalities", &mut modalities, |k, v| parse_list(k, v).map(Some))?;
        if let Some(m) = modalities {
            let names = crate::network::MODALITIES;
            if let Some(bad) = m.iter().find(|x| !names.contains(&x.as_str())) {
                return Err(HarnessError::Config(format!("[network] modalities: unknown {bad:?}")));
            }
            n.modalities = names.map(|name| m.iter().any(|x| x == name));
        }

        let t = &mut c.train;
        r.set("train", "lr", &mut t.lr)?;
        r.set_with("train", "milestones", &mut t.milestones, parse_list)?;
        r.set("train", "epochs", &mut t.epochs)?;
        r.set("train", "momentum", &mut t.momentum)?;
        r.set("train", "weight_decay", &mut t.weight_decay)?;
        r.set("train", "batch_size", &mut t.batch_size)?;
        r.set("train", "seed", &mut t.seed)?;
        r.set("train", "eval_batch", &mut c.eval_batch)?;

        let sy = &mut c.synth;
        r.set_with("synth", "speeds", &mut c.synth_options.speeds, parse_list)?;
        r.set("synth", "color_shift", &mut c.synth_options.color_shift)?;
        r.set("synth", "train_per_class", &mut sy.train_per_class)?;
        r.set("synth", "test_per_class", &mut sy.test_per_class)?;
        r.set("synth", "frames_per_video", &mut sy.frames_per_video)?;
        r.set("synth", "width", &mut sy.width)?;
        r.set("synth", "height", &mut sy.height)?;
        r.set("synth", "sprite_size", &mut sy.sprite_size)?;
        r.set("synth", "background_pool", &mut sy.background_pool)?;
        r.set("synth", "sprite_pool", &mut sy.sprite_pool)?;
        r.set("synth", "seed", &mut sy.seed)?;

        if let Some(k) = r.leftovers() {
            return Err(HarnessError::Config(format!("unknown key {k}")));
        }
        c.sync(classes)?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_ini_str(&std::fs::read_to_string(path)?)
    }

    /// Re-derives dependent fields (synth classes, codec copy, class count)
    /// and validates everything.
    pub fn sync(&mut self, num_classes: Option<usize>) -> Result<(), HarnessError> {
        self.synth.codec = self.codec;
        let mut classes = direction_classes(&self.synth_options.speeds);
        if self.synth_options.color_shift != 0 {
            classes.extend(color_shift_classes(self.synth_options.color_shift));
        }
        self.synth.classes = classes;
        self.network.num_classes = num_classes.unwrap_or(self.synth.classes.len());
        self.validate()
    }

    /// Sets every seed from one value.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        self.sampler.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.codec.validate()?;
        self.sampler.validate()?;
        self.network.validate()?;
        self.train.validate()?;
        if self.synth_options.speeds.is_empty() && self.synth_options.color_shift == 0 {
            return Err(HarnessError::Config("[synth] needs at least one speed".into()));
        }
        if self.eval_batch == 0 {
            return Err(HarnessError::Config("[train] eval_batch must be positive".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// The INI text that reproduces this configuration.
    pub fn to_ini_string(&self) -> String {
        let join = |v: &[String]| v.join(", ");
        let list = |v: &[usize]| join(&v.iter().map(|x| x.to_string()).collect::<Vec<_>>());
        let f3 = |v: &[f64; 3]| join(&v.iter().map(|x| x.to_string()).collect::<Vec<_>>());
        let n = &self.network;
        let modalities: Vec<String> = crate::network::MODALITIES
            .iter()
            .zip(n.modalities)
            .filter(|(_, on)| *on)
            .map(|(m, _)| m.to_string())
            .collect();
        let stages = if n.insertion_stages.is_empty() {
            "none".to_string()
        } else {
            list(&n.insertion_stages)
        };
        let p: &[PathwayConfig; 3] = &n.pathways;
        let s = &self.sampler;
        let t = &self.train;
        let sy = &self.synth;
        format!(
            "[codec]\ngop_size = {}\nblock_size = {}\nsearch_range = {}\n\n\
             [sampler]\nsegments = {}\ncrop = {}\ntest_segments = {}\nseed = {}\nscale_min = {}\nscale_max = {}\naccumulate = {}\nmean = {}\nstd = {}\n\n\
             [network]\narrangement = {}\ninsertion_stages = {}\nreduction = {}\nbias = {}\ngate_bias_init = {}\nnum_classes = {}\niframe_channels = {}\nmv_channels = {}\nresidual_channels = {}\nblocks_per_stage = {}\nmodalities = {}\n\n\
             [train]\nlr = {}\nmilestones = {}\nepochs = {}\nmomentum = {}\nweight_decay = {}\nbatch_size = {}\nseed = {}\neval_batch = {}\n\n\
             [synth]\nspeeds = {}\ncolor_shift = {}\ntrain_per_class = {}\ntest_per_class = {}\nframes_per_video = {}\nwidth = {}\nheight = {}\nsprite_size = {}\nbackground_pool = {}\nsprite_pool = {}\nseed = {}\n",
            self.codec.gop_size,
            self.codec.block_size,
            self.codec.search_range,
            s.segments,
            s.crop,
            s.test_segments,
            s.seed,
            s.scale_min,
            s.scale_max,
            s.accumulate,
            f3(&s.norm.mean),
            f3(&s.norm.std),
            n.team.arrangement.label(),
            stages,
            n.team.reduction,
            n.team.bias,
            n.team.gate_bias_init,
            n.num_classes,
            list(&p[0].stage_channels),
            list(&p[1].stage_channels),
            list(&p[2].stage_channels),
            list(&p[0].blocks_per_stage),
            join(&modalities),
            t.lr,
            list(&t.milestones),
            t.epochs,
            t.momentum,
            t.weight_decay,
            t.batch_size,
            t.seed,
            self.eval_batch,
            join(&self.synth_options.speeds.iter().map(|x| x.to_string()).collect::<Vec<_>>()),
            self.synth_options.color_shift,
            sy.train_per_class,
            sy.test_per_class,
            sy.frames_per_video,
            sy.width,
            sy.height,
            sy.sprite_size,
            sy.background_pool,
            sy.sprite_pool,
            sy.seed,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(RunConfig::from_ini_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn ini_round_trip() {
        let mut c = RunConfig::default();
        c.network.team.arrangement = Arrangement::Parallel;
        c.network.insertion_stages = vec![2, 5];
        c.train.milestones = vec![3, 5];
        c.sampler.norm.mean = [0.5, 0.25, 0.125];
        c.synth_options.color_shift = 6;
        c.sync(None).unwrap();
        let back = RunConfig::from_ini_str(&c.to_ini_string()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_eq!(back.network.num_classes, 10);
    }

    #[test]
    fn keys_are_applied() {
        let c = RunConfig::from_ini_str(
            "[network]\narrangement = s->c\ninsertion_stages = none\nmodalities = iframe\n[train]\nlr = 0.5\n",
        )
        .unwrap();
        assert_eq!(c.network.team.arrangement, Arrangement::SpatialThenChannel);
        assert!(c.network.insertion_stages.is_empty());
        assert_eq!(c.network.modalities, [true, false, false]);
        assert_eq!(c.train.lr, 0.5);
    }

    #[test]
    fn unknown_and_malformed_entries_fail() {
        assert!(RunConfig::from_ini_str("[codec]\nblock = 3\n").is_err());
        assert!(RunConfig::from_ini_str("[nope]\na = 1\n").is_err());
        assert!(RunConfig::from_ini_str("[train]\nepochs = many\n").is_err());
        assert!(RunConfig::from_ini_str("[network]\niframe_channels = 1, 2\n").is_err());
        assert!(RunConfig::from_ini_str("[network]\narrangement = sideways\n").is_err());
        assert!(RunConfig::from_ini_str("[network]\ninsertion_stages = 3, 1\n").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let b = a.clone().with_seed(9);
        assert_eq!(a.hash().len(), 64);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), RunConfig::default().hash());
    }
}
