use std::ops::Range;

use rand::Rng;

use super::{SamplerConfig, SamplerError};
use crate::codec::{decode_gop_partial, FrameRgb, Gop, GopStream};

/// Splits `gop_count` GOP indices into `segments` contiguous runs.
///
/// With at least as many GOPs as segments, runs have equal length and the
/// remainder goes to the earliest runs. With fewer GOPs, segment `s` is the
/// single GOP `floor(s * gop_count / segments)`, so GOPs repeat.
pub fn segment_ranges(gop_count: usize, segments: usize) -> Vec<Range<usize>> {
    if gop_count == 0 || segments == 0 {
        return Vec::new();
    }
    if gop_count >= segments {
        let base = gop_count / segments;
        let rem = gop_count % segments;
        let mut start = 0;
        (0..segments)
            .map(|s| {
                let len = base + usize::from(s < rem);
                let r = start..start + len;
                start += len;
                r
            })
            .collect()
    } else {
        (0..segments)
            .map(|s| {
                let g = s * gop_count / segments;
                g..g + 1
            })
            .collect()
    }
}

/// Where a crop came from: the scaled frame size and the window's offset in it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropWindow {
    pub scaled_width: usize,
    pub scaled_height: usize,
    pub x: usize,
    pub y: usize,
    pub size: usize,
    pub src_width: usize,
    pub src_height: usize,
}

impl CropWindow {
    /// Nearest-neighbour source pixel for crop pixel `(cx, cy)`.
    #[inline]
    pub fn to_source(&self, cx: usize, cy: usize) -> (usize, usize) {
        let sx = ((self.x + cx) as f64 + 0.5) * self.src_width as f64 / self.scaled_width as f64;
        let sy = ((self.y + cy) as f64 + 0.5) * self.src_height as f64 / self.scaled_height as f64;
        (
            (sx as usize).min(self.src_width - 1),
            (sy as usize).min(self.src_height - 1),
        )
    }

    /// Crop pixel that samples source pixel `(sx, sy)`'s neighbourhood; the
    /// inverse of [`CropWindow::to_source`] up to rounding. `None` when outside.
    pub fn from_source(&self, sx: f64, sy: f64) -> Option<(f64, f64)> {
        let cx = sx * self.scaled_width as f64 / self.src_width as f64 - self.x as f64;
        let cy = sy * self.scaled_height as f64 / self.src_height as f64 - self.y as f64;
        (cx >= 0.0 && cy >= 0.0 && cx < self.size as f64 && cy < self.size as f64).then_some((cx, cy))
    }

    fn mv_scale(&self) -> (f64, f64) {
        (
            self.scaled_width as f64 / self.src_width as f64,
            self.scaled_height as f64 / self.src_height as f64,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepOrigin {
    pub gop: usize,
    /// 1-based P-frame index; 0 when the GOP has no P-frames.
    pub p_index: usize,
    pub window: CropWindow,
}

/// One time step of a clip, already cropped to `size x size`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipStep {
    pub iframe: FrameRgb,
    /// Interleaved `(dx, dy)` per pixel, in pixels of the cropped frame.
    pub mv: Vec<f64>,
    /// Interleaved RGB residual per pixel.
    pub residual: Vec<i32>,
    pub origin: StepOrigin,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClipSample {
    pub steps: Vec<ClipStep>,
    pub label: usize,
    pub size: usize,
    pub search_range: usize,
}

impl ClipSample {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Joins single-segment clips of one video into one clip along time.
    pub fn concat_time(clips: Vec<ClipSample>) -> Result<ClipSample, SamplerError> {
        let first = clips.first().ok_or(SamplerError::EmptyStream)?;
        let (label, size, search_range) = (first.label, first.size, first.search_range);
        if clips.iter().any(|c| c.size != size || c.label != label) {
            return Err(SamplerError::Inconsistent("clips to join differ in size or label".into()));
        }
        Ok(ClipSample {
            steps: clips.into_iter().flat_map(|c| c.steps).collect(),
            label,
            size,
            search_range,
        })
    }
}

/// Full-resolution modality maps for one (GOP, P-frame) pair.
struct StepSource<'a> {
    iframe: &'a FrameRgb,
    mv: Vec<i32>,
    residual: Vec<i32>,
}

fn step_source(gop: &Gop, p_index: usize, accumulate: bool) -> Result<StepSource<'_>, SamplerError> {
    let (w, h) = (gop.iframe.width(), gop.iframe.height());
    if p_index == 0 {
        return Ok(StepSource {
            iframe: &gop.iframe,
            mv: vec![0; w * h * 2],
            residual: vec![0; w * h * 3],
        });
    }
    if accumulate {
        let s = decode_gop_partial(gop, p_index)?;
        return Ok(StepSource {
            iframe: &gop.iframe,
            mv: s.acc_mv,
            residual: s.acc_residual,
        });
    }
    let pf = &gop.pframes[p_index - 1];
    let mut mv = Vec::with_capacity(w * h * 2);
    for y in 0..h {
        for x in 0..w {
            let v = pf.motion.at_pixel(x, y);
            mv.push(v.dx as i32);
            mv.push(v.dy as i32);
        }
    }
    let residual = pf.residual.data().iter().map(|&v| v as i32).collect();
    Ok(StepSource {
        iframe: &gop.iframe,
        mv,
        residual,
    })
}

fn crop_step(src: StepSource<'_>, window: CropWindow, gop: usize, p_index: usize) -> ClipStep {
    let n = window.size;
    let w = window.src_width;
    let (mx, my) = window.mv_scale();
    let mut rgb = Vec::with_capacity(n * n * 3);
    let mut mv = Vec::with_capacity(n * n * 2);
    let mut residual = Vec::with_capacity(n * n * 3);
    for cy in 0..n {
        for cx in 0..n {
            let (sx, sy) = window.to_source(cx, cy);
            let p = sy * w + sx;
            rgb.extend_from_slice(&src.iframe.pixel(sx, sy));
            mv.push(src.mv[p * 2] as f64 * mx);
            mv.push(src.mv[p * 2 + 1] as f64 * my);
            residual.extend_from_slice(&src.residual[p * 3..p * 3 + 3]);
        }
    }
    ClipStep {
        iframe: FrameRgb::new(n, n, rgb).expect("crop buffer sized n*n*3"),
        mv,
        residual,
        origin: StepOrigin { gop, p_index, window },
    }
}

fn check_crop(stream: &GopStream, crop: usize) -> Result<(), SamplerError> {
    let (w, h) = (stream.header.width(), stream.header.height());
    if crop == 0 || crop > w || crop > h {
        return Err(SamplerError::CropTooLarge { crop, width: w, height: h });
    }
    Ok(())
}

/// Training clip: one random GOP per segment, a random P-frame in it, and one
/// random scale-jittered crop shared by every map of the clip.
pub fn sample_train_clip(
    stream: &GopStream,
    label: usize,
    cfg: &SamplerConfig,
    rng: &mut impl Rng,
) -> Result<ClipSample, SamplerError> {
    cfg.validate()?;
    if stream.gops.is_empty() {
        return Err(SamplerError::EmptyStream);
    }
    check_crop(stream, cfg.crop)?;
    let (w, h) = (stream.header.width(), stream.header.height());
    let crop = cfg.crop;
    let scale = if cfg.scale_max > cfg.scale_min {
        rng.random_range(cfg.scale_min..=cfg.scale_max)
    } else {
        cfg.scale_min
    };
    let sw = ((w as f64 * scale).round() as usize).max(crop);
    let sh = ((h as f64 * scale).round() as usize).max(crop);
    let window = CropWindow {
        scaled_width: sw,
        scaled_height: sh,
        x: rng.random_range(0..=sw - crop),
        y: rng.random_range(0..=sh - crop),
        size: crop,
        src_width: w,
        src_height: h,
    };
    let mut steps = Vec::with_capacity(cfg.segments);
    for seg in segment_ranges(stream.gops.len(), cfg.segments) {
        let g = rng.random_range(seg);
        let gop = &stream.gops[g];
        let p_index = if gop.p_count() == 0 {
            0
        } else {
            rng.random_range(1..=gop.p_count())
        };
        let src = step_source(gop, p_index, cfg.accumulate)?;
        steps.push(crop_step(src, window, g, p_index));
    }
    Ok(ClipSample {
        steps,
        label,
        size: crop,
        search_range: stream.header.search_range as usize,
    })
}

/// Test clips: for each of `test_segments` segments, the centre GOP, its
/// middle P-frame (`ceil(n / 2)`) and a centre crop. Returns one single-step
/// clip per segment; join them with [`ClipSample::concat_time`].
pub fn sample_test_clips(stream: &GopStream, label: usize, cfg: &SamplerConfig) -> Result<Vec<ClipSample>, SamplerError> {
    cfg.validate()?;
    if stream.gops.is_empty() {
        return Err(SamplerError::EmptyStream);
    }
    check_crop(stream, cfg.crop)?;
    let (w, h) = (stream.header.width(), stream.header.height());
    let window = CropWindow {
        scaled_width: w,
        scaled_height: h,
        x: (w - cfg.crop) / 2,
        y: (h - cfg.crop) / 2,
        size: cfg.crop,
        src_width: w,
        src_height: h,
    };
    segment_ranges(stream.gops.len(), cfg.test_segments)
        .into_iter()
        .map(|seg| {
            let g = seg.start + seg.len() / 2;
            let gop = &stream.gops[g];
            let p_index = gop.p_count().div_ceil(2);
            let src = step_source(gop, p_index, cfg.accumulate)?;
            Ok(ClipSample {
                steps: vec![crop_step(src, window, g, p_index)],
                label,
                size: cfg.crop,
                search_range: stream.header.search_range as usize,
            })
        })
        .collect()
}
