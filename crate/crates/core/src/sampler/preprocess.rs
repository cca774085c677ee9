use serde::{Deserialize, Serialize};

use super::{ClipSample, SamplerError};
use crate::tensor::Tensor;

/// Per-channel I-frame standardization applied after scaling to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for Normalization {
    /// ImageNet statistics.
    fn default() -> Self {
        Self {
            mean: [0.485, 0.456, 0.406],
            std: [0.229, 0.224, 0.225],
        }
    }
}

impl Normalization {
    #[inline]
    pub fn iframe(&self, v: u8, c: usize) -> f64 {
        (v as f64 / 255.0 - self.mean[c]) / self.std[c]
    }

    #[inline]
    pub fn iframe_inverse(&self, x: f64, c: usize) -> f64 {
        (x * self.std[c] + self.mean[c]) * 255.0
    }
}

/// Model-ready tensors for `n` clips of `t` steps each, laid out `(n * t, C, H, W)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipBatch {
    pub x_i: Tensor,
    pub x_mv: Tensor,
    pub x_res: Tensor,
    pub labels: Vec<usize>,
    pub n: usize,
    pub t: usize,
    pub search_range: usize,
}

impl ClipBatch {
    pub fn size(&self) -> usize {
        self.x_i.shape()[2]
    }

    pub fn mv_inverse(&self, x: f64) -> f64 {
        x * self.search_range as f64
    }

    pub fn residual_inverse(x: f64) -> f64 {
        x * 255.0
    }
}

/// Stacks clips into normalized tensors. MV is divided by the search range and
/// residual by 255.
pub fn preprocess(clips: &[ClipSample], norm: &Normalization) -> Result<ClipBatch, SamplerError> {
    let first = clips.first().ok_or(SamplerError::Inconsistent("no clips".into()))?;
    let (t, size, search_range) = (first.len(), first.size, first.search_range);
    if t == 0 {
        return Err(SamplerError::Inconsistent("clip has no steps".into()));
    }
    if search_range == 0 {
        return Err(SamplerError::Inconsistent("search range is zero".into()));
    }
    for c in clips {
        let bad_step = c.steps.iter().any(|s| {
            s.iframe.width() != size || s.iframe.height() != size || s.mv.len() != size * size * 2
        });
        if c.len() != t || c.size != size || c.search_range != search_range || bad_step {
            return Err(SamplerError::Inconsistent(format!(
                "expected {t} steps of {size}x{size}, search range {search_range}"
            )));
        }
    }
    let n = clips.len();
    let hw = size * size;
    let bt = n * t;
    let mut xi = vec![0.0; bt * 3 * hw];
    let mut xmv = vec![0.0; bt * 2 * hw];
    let mut xres = vec![0.0; bt * 3 * hw];
    let sr = search_range as f64;
    for (b, step) in clips.iter().flat_map(|c| c.steps.iter()).enumerate() {
        let rgb = step.iframe.data();
        for p in 0..hw {
            for c in 0..3 {
                xi[(b * 3 + c) * hw + p] = norm.iframe(rgb[p * 3 + c], c);
                xres[(b * 3 + c) * hw + p] = step.residual[p * 3 + c] as f64 / 255.0;
            }
            for c in 0..2 {
                xmv[(b * 2 + c) * hw + p] = step.mv[p * 2 + c] / sr;
            }
        }
    }
    Ok(ClipBatch {
        x_i: Tensor::new(&[bt, 3, size, size], xi).expect("sized above"),
        x_mv: Tensor::new(&[bt, 2, size, size], xmv).expect("sized above"),
        x_res: Tensor::new(&[bt, 3, size, size], xres).expect("sized above"),
        labels: clips.iter().map(|c| c.label).collect(),
        n,
        t,
        search_range,
    })
}
