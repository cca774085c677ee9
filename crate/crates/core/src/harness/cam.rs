//! Class activation maps from the pooled heads, plus PNG and raw export.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::synth::{render_video, SpriteTrack, SynthSpec, TexturePools};
use super::HarnessError;
use crate::codec::{encode_stream, GopStream};
use crate::network::{Model, MODALITIES};
use crate::sampler::{preprocess, sample_test_clips, ClipSample, SamplerConfig};
use crate::tensor::{Graph, Tensor};

/// `(frames, classes, height, width)` maps, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CamMaps {
    pub frames: usize,
    pub classes: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl CamMaps {
    pub fn map(&self, frame: usize, class: usize) -> &[f64] {
        let hw = self.height * self.width;
        let o = (frame * self.classes + class) * hw;
        &self.data[o..o + hw]
    }

    fn map_mut(&mut self, frame: usize, class: usize) -> &mut [f64] {
        let hw = self.height * self.width;
        let o = (frame * self.classes + class) * hw;
        &mut self.data[o..o + hw]
    }

    /// Rescales every map to `[0, 1]`; constant maps become zero.
    pub fn normalize(&mut self) {
        for f in 0..self.frames {
            for k in 0..self.classes {
                let m = self.map_mut(f, k);
                let lo = m.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let span = hi - lo;
                for v in m.iter_mut() {
                    *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
                }
            }
        }
    }

    /// Position `(x, y)` of the first maximum in row-major order.
    pub fn argmax(&self, frame: usize, class: usize) -> (usize, usize) {
        let m = self.map(frame, class);
        let mut best = 0;
        for (i, &v) in m.iter().enumerate() {
            if v > m[best] {
                best = i;
            }
        }
        (best % self.width, best / self.width)
    }
}

/// Bilinear resize of one `h x w` map, edge clamped. Cell `j` is anchored on
/// output pixel `j * out / in`: every 3x3, stride-2, padding-1 layer centres
/// output `i` on input `2i`, so that is where the cell's receptive field is
/// centred in the input frame.
pub fn upsample_bilinear(src: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    let axis = |i: usize, n_in: usize, n_out: usize| {
        let s = i as f64 * n_in as f64 / n_out as f64;
        let i0 = (s.floor() as usize).min(n_in - 1);
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, s - i0 as f64)
    };
    let xs: Vec<_> = (0..out_w).map(|x| axis(x, w, out_w)).collect();
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let (y0, y1, ly) = axis(y, h, out_h);
        for &(x0, x1, lx) in &xs {
            let top = src[y0 * w + x0] * (1.0 - lx) + src[y0 * w + x1] * lx;
            let bottom = src[y1 * w + x0] * (1.0 - lx) + src[y1 * w + x1] * lx;
            out.push(top * (1.0 - ly) + bottom * ly);
        }
    }
    out
}

/// Unnormalised maps `sum_c W[c, k] * F[c]` for `(B, C, h, w)` features and a
/// `(C, K)` head, resized to `out_h x out_w`.
pub fn raw_cams(
    features: &Tensor,
    fc_weight: &Tensor,
    out_h: usize,
    out_w: usize,
) -> Result<CamMaps, HarnessError> {
    let (b, c, h, w) = features.dims4("cam")?;
    let (wc, k) = fc_weight.dims2("cam")?;
    if wc != c {
        return Err(HarnessError::Cam(format!("head expects {wc} channels, features have {c}")));
    }
    let (f, fw) = (features.data(), fc_weight.data());
    let hw = h * w;
    let mut data = Vec::with_capacity(b * k * out_h * out_w);
    let mut small = vec![0.0; hw];
    for n in 0..b {
        for class in 0..k {
            small.fill(0.0);
            for ch in 0..c {
                let wt = fw[ch * k + class];
                let plane = &f[(n * c + ch) * hw..(n * c + ch + 1) * hw];
                for (s, &v) in small.iter_mut().zip(plane) {
                    *s += wt * v;
                }
            }
            data.extend(upsample_bilinear(&small, h, w, out_h, out_w));
        }
    }
    Ok(CamMaps {
        frames: b,
        classes: k,
        height: out_h,
        width: out_w,
        data,
    })
}

/// Normalised CAMs for every time step of a batch of clips.
#[derive(Clone, Debug)]
pub struct ClipCams {
    /// One entry per enabled pathway.
    pub pathways: [Option<CamMaps>; 3],
    /// Mean of the raw pathway maps, normalised afterwards. Its spatial mean
    /// is the averaged frame logit up to the bias.
    pub combined: CamMaps,
}

pub fn compute_cam(
    model: &Model,
    clips: &[ClipSample],
    norm_cfg: &SamplerConfig,
) -> Result<ClipCams, HarnessError> {
    let batch = preprocess(clips, &norm_cfg.norm)?;
    let mut g = Graph::new();
    let out = model.forward_batch(&mut g, &batch)?;
    let size = batch.size();
    let mut raw: [Option<CamMaps>; 3] = [None, None, None];
    for i in 0..3 {
        let (Some(p), Some(feat)) = (&model.pathways[i], out.features[i]) else {
            continue;
        };
        raw[i] = Some(raw_cams(g.value(feat), model.params.value(p.fc_weight), size, size)?);
    }
    let active: Vec<&CamMaps> = raw.iter().flatten().collect();
    let Some(first) = active.first() else {
        return Err(HarnessError::Cam("model has no pathway heads".into()));
    };
    let mut combined = CamMaps {
        data: vec![0.0; first.data.len()],
        ..(*first).clone()
    };
    for m in &active {
        for (c, v) in combined.data.iter_mut().zip(&m.data) {
            *c += v / active.len() as f64;
        }
    }
    combined.normalize();
    let pathways = raw.map(|m| {
        m.map(|mut m| {
            m.normalize();
            m
        })
    });
    Ok(ClipCams { pathways, combined })
}

/// One video with its sprite ground truth.
#[derive(Clone, Debug)]
pub struct ProbeVideo {
    pub stream: GopStream,
    pub label: usize,
    pub track: SpriteTrack,
}

/// Renders `per_class` fresh videos per class at `width x height` with the
/// dataset's sprites and motions. Random streams start at `first_id` so they
/// can be kept apart from the training videos.
pub fn probe_videos(
    spec: &SynthSpec,
    width: usize,
    height: usize,
    per_class: usize,
    first_id: u64,
) -> Result<Vec<ProbeVideo>, HarnessError> {
    let mut probe = spec.clone();
    probe.width = width;
    probe.height = height;
    probe.validate()?;
    let pools = TexturePools::new(spec).resized(spec, width, height);
    let mut out = Vec::with_capacity(per_class * spec.classes.len());
    for i in 0..per_class {
        for label in 0..spec.classes.len() {
            let id = first_id + (i * spec.classes.len() + label) as u64;
            let (frames, track) = render_video(&probe, &pools, label, id);
            out.push(ProbeVideo {
                stream: encode_stream(&frames, spec.codec)?,
                label,
                track,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CamEval {
    pub frames: usize,
    /// Hits of the combined map.
    pub hits: usize,
    /// Hits per pathway map.
    pub pathway_hits: [usize; 3],
}

impl CamEval {
    pub fn rate(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.hits as f64 / self.frames as f64
        }
    }
}

/// Counts test-protocol time steps whose true-class CAM peak lies on the
/// sprite. Steps are scored against the sprite box at the sampled P-frame;
/// `sampler.crop` must equal the frame size so crop and frame coordinates
/// agree.
pub fn cam_hit_rate(
    model: &Model,
    videos: &[ProbeVideo],
    sampler: &SamplerConfig,
) -> Result<CamEval, HarnessError> {
    let mut eval = CamEval::default();
    for v in videos {
        let (w, h) = (v.stream.header.width(), v.stream.header.height());
        if w != sampler.crop || h != sampler.crop {
            return Err(HarnessError::Cam(format!(
                "probe frames are {w}x{h}, crop is {}",
                sampler.crop
            )));
        }
        let clips = sample_test_clips(&v.stream, v.label, sampler)?;
        let cams = compute_cam(model, &clips, sampler)?;
        for (f, clip) in clips.iter().enumerate() {
            let o = clip.steps[0].origin;
            let frame = v.stream.gop_start(o.gop) + o.p_index;
            let hit = |m: &CamMaps| {
                let (x, y) = m.argmax(f, v.label);
                v.track.contains(frame, x, y)
            };
            eval.frames += 1;
            eval.hits += hit(&cams.combined) as usize;
            for (i, m) in cams.pathways.iter().enumerate() {
                if let Some(m) = m {
                    eval.pathway_hits[i] += hit(m) as usize;
                }
            }
        }
    }
    Ok(eval)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CamSidecar {
    /// `[frames, classes, height, width]`.
    pub shape: [usize; 4],
    pub dtype: String,
    pub source: String,
    pub config_hash: String,
    pub seed: u64,
}

/// Blue-cyan-yellow-red ramp.
fn heat(v: f64) -> [u8; 3] {
    let stops = [[0.0, 0.0, 128.0], [0.0, 200.0, 255.0], [255.0, 230.0, 0.0], [200.0, 0.0, 0.0]];
    let s = v.clamp(0.0, 1.0) * 3.0;
    let i = (s.floor() as usize).min(2);
    let t = s - i as f64;
    std::array::from_fn(|c| (stops[i][c] * (1.0 - t) + stops[i + 1][c] * t).round() as u8)
}

pub fn write_heatmap_png(path: &Path, map: &[f64], width: usize, height: usize) -> Result<(), HarnessError> {
    let mut enc = png::Encoder::new(BufWriter::new(File::create(path)?), width as u32, height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let data: Vec<u8> = map.iter().flat_map(|&v| heat(v)).collect();
    enc.write_header()?.write_image_data(&data)?;
    Ok(())
}

/// Writes `{stem}_{source}.f32` (little-endian), its `.json` sidecar and one
/// heatmap PNG per frame for `classes[frame]`, for every pathway and the
/// combined map. Returns the written paths.
pub fn export_cams(
    cams: &ClipCams,
    classes: &[usize],
    dir: &Path,
    stem: &str,
    config_hash: &str,
    seed: u64,
) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir)?;
    let sources = MODALITIES
        .iter()
        .zip(&cams.pathways)
        .filter_map(|(name, m)| m.as_ref().map(|m| (*name, m)))
        .chain([("combined", &cams.combined)]);
    let mut written = Vec::new();
    for (name, m) in sources {
        let raw = dir.join(format!("{stem}_{name}.f32"));
        let mut w = BufWriter::new(File::create(&raw)?);
        for &v in &m.data {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        w.flush()?;
        let side = dir.join(format!("{stem}_{name}.json"));
        let meta = CamSidecar {
            shape: [m.frames, m.classes, m.height, m.width],
            dtype: "float32-le".into(),
            source: name.into(),
            config_hash: config_hash.into(),
            seed,
        };
        std::fs::write(&side, serde_json::to_string_pretty(&meta)?)?;
        written.extend([raw, side]);
        for f in 0..m.frames {
            let class = classes.get(f).copied().unwrap_or(0).min(m.classes - 1);
            let path = dir.join(format!("{stem}_{name}_t{f}_c{class}.png"));
            write_heatmap_png(&path, m.map(f, class), m.width, m.height)?;
            written.push(path);
        }
    }
    Ok(written)
}
