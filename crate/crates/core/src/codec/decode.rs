use super::encode::predict;
use super::{clamp_coord, CodecError, FrameRgb, Gop, GopStream};

/// Partial-decode output for one P-frame of a GOP: the GOP's I-frame plus the
/// displacement and residual accumulated back to it.
///
/// For each pixel `p`, the source of `p` in the I-frame is `p - acc_mv(p)` and
/// the decoded value is `iframe(p - acc_mv(p)) + acc_residual(p)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartialSample {
    pub iframe: FrameRgb,
    /// `H x W x 2` interleaved `(dx, dy)`.
    pub acc_mv: Vec<i32>,
    /// `H x W x 3` interleaved RGB.
    pub acc_residual: Vec<i32>,
    /// 1-based P-frame position inside the GOP.
    pub p_index: usize,
}

impl PartialSample {
    pub fn width(&self) -> usize {
        self.iframe.width()
    }

    pub fn height(&self) -> usize {
        self.iframe.height()
    }

    #[inline]
    pub fn mv_at(&self, x: usize, y: usize) -> (i32, i32) {
        let i = (y * self.width() + x) * 2;
        (self.acc_mv[i], self.acc_mv[i + 1])
    }
}

fn apply_pframe(reference: &FrameRgb, p: &super::PFrame) -> Result<FrameRgb, CodecError> {
    let pred = predict(reference, &p.motion);
    let data = pred
        .data()
        .iter()
        .zip(p.residual.data())
        .map(|(&v, &r)| {
            let out = v as i16 + r;
            u8::try_from(out).map_err(|_| {
                CodecError::Malformed(format!("reconstructed value {out} outside [0, 255]"))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    FrameRgb::new(reference.width(), reference.height(), data)
}

/// Sequentially decodes every frame of one GOP.
pub fn decode_gop(gop: &Gop) -> Result<Vec<FrameRgb>, CodecError> {
    let mut frames = Vec::with_capacity(gop.len());
    frames.push(gop.iframe.clone());
    for p in &gop.pframes {
        let next = apply_pframe(frames.last().expect("non-empty"), p)?;
        frames.push(next);
    }
    Ok(frames)
}

/// Reconstructs every RGB frame of the stream in display order.
pub fn decode_full(stream: &GopStream) -> Result<Vec<FrameRgb>, CodecError> {
    stream.validate()?;
    let mut out = Vec::with_capacity(stream.frame_count());
    for gop in &stream.gops {
        out.extend(decode_gop(gop)?);
    }
    Ok(out)
}

/// Traces MVs and residuals of P-frames `1..=p_index` back to the I-frame.
///
/// With `q = clamp(p - mv_t(p))`, the recursion is
/// `D_t(p) = (p - q) + D_{t-1}(q)` and `R_t(p) = r_t(p) + R_{t-1}(q)`.
/// Storing the clamped step `p - q` keeps `p - D_t(p)` an in-frame location,
/// so reconstruction matches sequential decoding bit for bit. Cost is
/// `O(p_index * H * W)` and touches only this GOP.
pub fn decode_gop_partial(gop: &Gop, p_index: usize) -> Result<PartialSample, CodecError> {
    if p_index == 0 || p_index > gop.p_count() {
        return Err(CodecError::PIndexOutOfRange {
            p_index,
            p_count: gop.p_count(),
        });
    }
    let w = gop.iframe.width();
    let h = gop.iframe.height();
    let mut acc_mv = vec![0i32; w * h * 2];
    let mut acc_res = vec![0i32; w * h * 3];
    let mut next_mv = vec![0i32; w * h * 2];
    let mut next_res = vec![0i32; w * h * 3];
    for pf in &gop.pframes[..p_index] {
        let res = pf.residual.data();
        for y in 0..h {
            for x in 0..w {
                let mv = pf.motion.at_pixel(x, y);
                let qx = clamp_coord(x as i64 - mv.dx as i64, w);
                let qy = clamp_coord(y as i64 - mv.dy as i64, h);
                let p = y * w + x;
                let q = qy * w + qx;
                next_mv[p * 2] = (x as i32 - qx as i32) + acc_mv[q * 2];
                next_mv[p * 2 + 1] = (y as i32 - qy as i32) + acc_mv[q * 2 + 1];
                for c in 0..3 {
                    next_res[p * 3 + c] = res[p * 3 + c] as i32 + acc_res[q * 3 + c];
                }
            }
        }
        std::mem::swap(&mut acc_mv, &mut next_mv);
        std::mem::swap(&mut acc_res, &mut next_res);
    }
    Ok(PartialSample {
        iframe: gop.iframe.clone(),
        acc_mv,
        acc_residual: acc_res,
        p_index,
    })
}

/// Rebuilds the RGB frame a partial sample stands for:
/// `out(p) = iframe(clamp(p - D(p))) + R(p)`, saturated to `[0, 255]`.
pub fn reconstruct_from_partial(sample: &PartialSample) -> Result<FrameRgb, CodecError> {
    let w = sample.width();
    let h = sample.height();
    if sample.acc_mv.len() != w * h * 2 || sample.acc_residual.len() != w * h * 3 {
        return Err(CodecError::Malformed(
            "partial sample buffers do not match I-frame size".into(),
        ));
    }
    let src = sample.iframe.data();
    let mut out = vec![0u8; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = sample.mv_at(x, y);
            let sx = clamp_coord(x as i64 - dx as i64, w);
            let sy = clamp_coord(y as i64 - dy as i64, h);
            let p = (y * w + x) * 3;
            let s = (sy * w + sx) * 3;
            for c in 0..3 {
                let v = src[s + c] as i32 + sample.acc_residual[p + c];
                out[p + c] = v.clamp(0, 255) as u8;
            }
        }
    }
    FrameRgb::new(w, h, out)
}
