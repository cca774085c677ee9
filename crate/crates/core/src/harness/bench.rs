//! Wall-clock comparison of full decoding against GOP-level partial decoding.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::codec::{decode_full, decode_gop_partial, encode_stream, CodecParams, FrameRgb, GopStream};
use crate::network::Model;
use crate::sampler::{preprocess, sample_test_clips, segment_ranges, ClipSample, SamplerConfig};

/// Which P-frame each sampled GOP is read up to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PIndexMode {
    /// `ceil(n / 2)`, as in the test protocol.
    Centre,
    /// The last P-frame, the longest accumulation trace.
    Last,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub gop_count: usize,
    pub frame_count: usize,
    pub t: usize,
    pub p_index_mode: PIndexMode,
    pub reps: usize,
    /// Seconds per repetition.
    pub full_secs: Vec<f64>,
    pub partial_secs: Vec<f64>,
    pub full_median: f64,
    pub partial_median: f64,
    /// `partial_median / full_median`.
    pub ratio: f64,
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        (s[m - 1] + s[m]) / 2.0
    }
}

/// `(gop, p_index)` pairs read by the partial path: the centre GOP of each of
/// `t` segments.
pub fn sampled_gops(stream: &GopStream, t: usize, mode: PIndexMode) -> Vec<(usize, usize)> {
    segment_ranges(stream.gop_count(), t)
        .into_iter()
        .map(|r| {
            let g = r.start + r.len() / 2;
            let n = stream.gops[g].p_count();
            let p = match mode {
                PIndexMode::Centre => n.div_ceil(2),
                PIndexMode::Last => n,
            };
            (g, p)
        })
        .collect()
}

/// Times `reps` full decodes and `reps` partial decodes of `t` sampled GOPs.
/// Needs at least `4 * t` GOPs.
pub fn benchmark_decode(
    stream: &GopStream,
    t: usize,
    reps: usize,
    mode: PIndexMode,
) -> Result<BenchReport, HarnessError> {
    if t == 0 || reps == 0 {
        return Err(HarnessError::Config("bench needs t > 0 and reps > 0".into()));
    }
    if stream.gop_count() < 4 * t {
        return Err(HarnessError::Config(format!(
            "bench needs at least {} GOPs, stream has {}",
            4 * t,
            stream.gop_count()
        )));
    }
    stream.validate()?;
    let picks = sampled_gops(stream, t, mode);
    let mut full_secs = Vec::with_capacity(reps);
    let mut partial_secs = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        let frames = decode_full(stream)?;
        full_secs.push(start.elapsed().as_secs_f64());
        std::hint::black_box(frames);

        let start = Instant::now();
        for &(g, p) in &picks {
            std::hint::black_box(decode_gop_partial(&stream.gops[g], p)?);
        }
        partial_secs.push(start.elapsed().as_secs_f64());
    }
    let full_median = median(&full_secs);
    let partial_median = median(&partial_secs);
    Ok(BenchReport {
        gop_count: stream.gop_count(),
        frame_count: stream.frame_count(),
        t,
        p_index_mode: mode,
        reps,
        full_secs,
        partial_secs,
        full_median,
        partial_median,
        ratio: partial_median / full_median.max(f64::MIN_POSITIVE),
    })
}

/// Seconds per model forward pass over the test-protocol clip of `stream`,
/// decoding excluded. Returns every repetition.
pub fn benchmark_forward(
    model: &Model,
    stream: &GopStream,
    sampler: &SamplerConfig,
    reps: usize,
) -> Result<Vec<f64>, HarnessError> {
    let clip = ClipSample::concat_time(sample_test_clips(stream, 0, sampler)?)?;
    let batch = preprocess(&[clip], &sampler.norm)?;
    (0..reps)
        .map(|_| {
            let start = Instant::now();
            std::hint::black_box(model.logits(&batch)?);
            Ok(start.elapsed().as_secs_f64())
        })
        .collect()
}

/// A static textured scene of `gops` GOPs.
pub fn static_stream(gops: usize, size: usize, params: CodecParams) -> Result<GopStream, HarnessError> {
    let data: Vec<u8> = (0..size * size)
        .flat_map(|p| {
            let (x, y) = (p % size, p / size);
            [(x * 7 + y * 3) as u8, (x ^ y) as u8, (x * y / 5) as u8]
        })
        .collect();
    let frame = FrameRgb::new(size, size, data)?;
    let frames = vec![frame; gops * params.gop_size];
    Ok(encode_stream(&frames, params)?)
}
