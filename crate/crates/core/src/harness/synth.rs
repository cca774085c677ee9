//! Synthetic motion videos: a textured sprite drifting over a static
//! background, wrapping at the frame edges.
//!
//! Backgrounds and sprite textures come from pools shared by every class and
//! the sprite starts at a uniformly random position, so a single frame says
//! nothing about the class. Only the motion (and, for the optional
//! colour-shift classes, the brightness drift) does.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::codec::{encode_stream, serialize, CodecParams, FrameRgb};
use crate::sampler::{write_manifest, ManifestEntry};

/// How a class moves its sprite.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotionClass {
    /// Pixels per frame.
    pub dx: i32,
    pub dy: i32,
    /// Added to every sprite channel per frame.
    pub brightness_step: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: Vec<MotionClass>,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub frames_per_video: usize,
    pub width: usize,
    pub height: usize,
    pub sprite_size: usize,
    pub background_pool: usize,
    pub sprite_pool: usize,
    pub codec: CodecParams,
    pub seed: u64,
}

/// Four directions times the given speeds, ordered speed-major.
pub fn direction_classes(speeds: &[i32]) -> Vec<MotionClass> {
    let dirs = [(1, 0), (-1, 0), (0, 1), (0, -1)];
    speeds
        .iter()
        .flat_map(|&s| {
            dirs.iter().map(move |&(x, y)| MotionClass {
                dx: x * s,
                dy: y * s,
                brightness_step: 0,
            })
        })
        .collect()
}

/// Two static classes whose sprite brightens or darkens.
pub fn color_shift_classes(step: i32) -> Vec<MotionClass> {
    [step, -step]
        .map(|b| MotionClass {
            dx: 0,
            dy: 0,
            brightness_step: b,
        })
        .to_vec()
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: direction_classes(&[1, 4]),
            train_per_class: 100,
            test_per_class: 25,
            frames_per_video: 16,
            width: 64,
            height: 64,
            sprite_size: 40,
            background_pool: 8,
            sprite_pool: 8,
            codec: CodecParams {
                gop_size: 4,
                block_size: 16,
                search_range: 4,
            },
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let err = |m: String| Err(HarnessError::Config(m));
        self.codec.validate()?;
        let b = self.codec.block_size;
        if self.width == 0 || self.height == 0 || !self.width.is_multiple_of(b) || !self.height.is_multiple_of(b) {
            return err(format!("frame {}x{} is not a multiple of block size {b}", self.width, self.height));
        }
        if self.classes.is_empty() || self.frames_per_video == 0 {
            return err("need at least one class and one frame".into());
        }
        if self.sprite_size == 0 || self.sprite_size > self.width.min(self.height) {
            return err(format!("sprite size {} does not fit the frame", self.sprite_size));
        }
        if self.background_pool == 0 || self.sprite_pool == 0 {
            return err("texture pools must be non-empty".into());
        }
        Ok(())
    }
}

/// Sprite placement per frame; the box may wrap around the frame edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpriteTrack {
    pub size: usize,
    pub width: usize,
    pub height: usize,
    /// Top-left corner per frame.
    pub positions: Vec<(usize, usize)>,
}

impl SpriteTrack {
    /// Whether pixel `(x, y)` is covered by the sprite in `frame`.
    pub fn contains(&self, frame: usize, x: usize, y: usize) -> bool {
        let (px, py) = self.positions[frame];
        (x + self.width - px) % self.width < self.size && (y + self.height - py) % self.height < self.size
    }
}

/// Smooth sinusoidal RGB pattern.
type Texture = Vec<[f64; 3]>;

fn background(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Texture {
    let waves: Vec<[f64; 5]> = (0..3 * 3)
        .map(|_| {
            [
                rng.random_range(1.0..4.0) / w as f64,
                rng.random_range(1.0..4.0) / h as f64,
                rng.random_range(0.0..TAU),
                rng.random_range(15.0..35.0),
                rng.random_range(0.0..TAU),
            ]
        })
        .collect();
    let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(70.0..150.0));
    (0..w * h)
        .map(|p| {
            let (x, y) = ((p % w) as f64, (p / w) as f64);
            std::array::from_fn(|c| {
                base[c]
                    + waves[c * 3..c * 3 + 3]
                        .iter()
                        .map(|[fx, fy, ph, a, ph2]| a * (TAU * fx * x + ph).sin() * (TAU * fy * y + ph2).cos())
                        .sum::<f64>()
            })
        })
        .collect()
}

/// High-contrast checker of random 4-pixel cells.
fn sprite(rng: &mut ChaCha8Rng, size: usize) -> Texture {
    let cells = size.div_ceil(4);
    let colors: Vec<[f64; 3]> = (0..cells * cells)
        .map(|i| {
            let bright = (i / cells + i % cells).is_multiple_of(2);
            std::array::from_fn(|_| {
                if bright {
                    rng.random_range(180.0..255.0)
                } else {
                    rng.random_range(0.0..60.0)
                }
            })
        })
        .collect();
    (0..size * size)
        .map(|p| colors[(p / size / 4) * cells + (p % size) / 4])
        .collect()
}

/// Texture pools shared by every video of a dataset.
pub struct TexturePools {
    backgrounds: Vec<(usize, usize, Texture)>,
    sprites: Vec<Texture>,
    sprite_size: usize,
}

impl TexturePools {
    pub fn new(spec: &SynthSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let backgrounds = (0..spec.background_pool)
            .map(|_| (spec.width, spec.height, background(&mut rng, spec.width, spec.height)))
            .collect();
        let sprites = (0..spec.sprite_pool).map(|_| sprite(&mut rng, spec.sprite_size)).collect();
        Self {
            backgrounds,
            sprites,
            sprite_size: spec.sprite_size,
        }
    }

    /// Same pools with backgrounds regenerated at another frame size.
    pub fn resized(&self, spec: &SynthSpec, width: usize, height: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(u64::MAX);
        Self {
            backgrounds: (0..self.backgrounds.len())
                .map(|_| (width, height, background(&mut rng, width, height)))
                .collect(),
            sprites: self.sprites.clone(),
            sprite_size: self.sprite_size,
        }
    }
}

/// Renders one video. `video_id` selects an independent random stream.
pub fn render_video(
    spec: &SynthSpec,
    pools: &TexturePools,
    class: usize,
    video_id: u64,
) -> (Vec<FrameRgb>, SpriteTrack) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(video_id);
    let (bw, bh, bg) = &pools.backgrounds[rng.random_range(0..pools.backgrounds.len())];
    let (w, h) = (*bw, *bh);
    let tex = &pools.sprites[rng.random_range(0..pools.sprites.len())];
    let n = pools.sprite_size;
    let (x0, y0) = (rng.random_range(0..w), rng.random_range(0..h));
    let mc = spec.classes[class];
    let mut positions = Vec::with_capacity(spec.frames_per_video);
    let frames = (0..spec.frames_per_video)
        .map(|t| {
            let px = (x0 as i64 + mc.dx as i64 * t as i64).rem_euclid(w as i64) as usize;
            let py = (y0 as i64 + mc.dy as i64 * t as i64).rem_euclid(h as i64) as usize;
            positions.push((px, py));
            let shift = (mc.brightness_step * t as i32) as f64;
            let mut data = Vec::with_capacity(w * h * 3);
            for y in 0..h {
                for x in 0..w {
                    let (sx, sy) = ((x + w - px) % w, (y + h - py) % h);
                    let v = if sx < n && sy < n {
                        tex[sy * n + sx].map(|c| c + shift)
                    } else {
                        bg[y * w + x]
                    };
                    data.extend(v.map(|c| c.round().clamp(0.0, 255.0) as u8));
                }
            }
            FrameRgb::new(w, h, data).expect("sized w*h*3")
        })
        .collect();
    (
        frames,
        SpriteTrack {
            size: n,
            width: w,
            height: h,
            positions,
        },
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub path: PathBuf,
    pub label: usize,
    pub track: SpriteTrack,
}

/// Paths written by [`synth_dataset`].
#[derive(Clone, Debug, PartialEq)]
pub struct SynthOutput {
    pub train_manifest: PathBuf,
    pub test_manifest: PathBuf,
    pub tracks: PathBuf,
}

/// Writes `videos/{split}_{index}.gops`, `train.jsonl`, `test.jsonl` and
/// `tracks.jsonl` under `dir`. Labels are balanced and output is a pure
/// function of the spec.
pub fn synth_dataset(spec: &SynthSpec, dir: &Path) -> Result<SynthOutput, HarnessError> {
    spec.validate()?;
    let videos = dir.join("videos");
    std::fs::create_dir_all(&videos)?;
    let pools = TexturePools::new(spec);
    let mut tracks = Vec::new();
    let mut video_id = 0u64;
    let mut manifests = Vec::new();
    for (split, per_class) in [("train", spec.train_per_class), ("test", spec.test_per_class)] {
        let mut entries = Vec::new();
        for i in 0..per_class {
            for class in 0..spec.classes.len() {
                let (frames, track) = render_video(spec, &pools, class, video_id);
                video_id += 1;
                let stream = encode_stream(&frames, spec.codec)?;
                let rel = PathBuf::from("videos").join(format!("{split}_{:05}.gops", i * spec.classes.len() + class));
                std::fs::write(dir.join(&rel), serialize(&stream)?)?;
                tracks.push(TrackRecord {
                    path: rel.clone(),
                    label: class,
                    track,
                });
                entries.push(ManifestEntry { path: rel, label: class });
            }
        }
        let m = dir.join(format!("{split}.jsonl"));
        write_manifest(&m, &entries)?;
        manifests.push(m);
    }
    let tracks_path = dir.join("tracks.jsonl");
    let mut text = String::new();
    for t in &tracks {
        text.push_str(&serde_json::to_string(t)?);
        text.push('\n');
    }
    std::fs::write(&tracks_path, text)?;
    Ok(SynthOutput {
        train_manifest: manifests[0].clone(),
        test_manifest: manifests[1].clone(),
        tracks: tracks_path,
    })
}
