use super::{
    clamp_coord, CodecError, CodecParams, FrameRgb, Gop, GopHeader, GopStream, MotionVector,
    MotionVectorField, PFrame, ResidualFrame, FORMAT_VERSION,
};

/// Candidate displacements in preference order: smaller `|dx| + |dy|` first,
/// then row-major (dy, then dx).
fn candidate_order(search_range: usize) -> Vec<MotionVector> {
    let r = search_range as i16;
    let mut out = Vec::with_capacity((2 * search_range + 1).pow(2));
    for dy in -r..=r {
        for dx in -r..=r {
            out.push(MotionVector::new(dx, dy));
        }
    }
    // stable sort keeps row-major order inside each L1 shell
    out.sort_by_key(|v| v.dx.unsigned_abs() + v.dy.unsigned_abs());
    out
}

/// SAD of one block against the displaced reference, giving up once the
/// running sum reaches `bound`.
fn block_sad(
    cur: &FrameRgb,
    reference: &FrameRgb,
    x0: usize,
    y0: usize,
    size: usize,
    mv: MotionVector,
    bound: u64,
) -> u64 {
    let w = cur.width();
    let h = cur.height();
    let rx0 = x0 as i64 - mv.dx as i64;
    let ry0 = y0 as i64 - mv.dy as i64;
    let inside = rx0 >= 0 && ry0 >= 0 && rx0 + size as i64 <= w as i64 && ry0 + size as i64 <= h as i64;
    let cd = cur.data();
    let rd = reference.data();
    let mut sad = 0u64;
    for row in 0..size {
        let y = y0 + row;
        let cstart = (y * w + x0) * 3;
        let crow = &cd[cstart..cstart + size * 3];
        if inside {
            let rstart = ((ry0 as usize + row) * w + rx0 as usize) * 3;
            let rrow = &rd[rstart..rstart + size * 3];
            sad += crow
                .iter()
                .zip(rrow)
                .map(|(&a, &b)| (a as i32 - b as i32).unsigned_abs() as u64)
                .sum::<u64>();
        } else {
            let ry = clamp_coord(ry0 + row as i64, h);
            for col in 0..size {
                let rx = clamp_coord(rx0 + col as i64, w);
                let ri = (ry * w + rx) * 3;
                for c in 0..3 {
                    sad += (crow[col * 3 + c] as i32 - rd[ri + c] as i32).unsigned_abs() as u64;
                }
            }
        }
        if sad >= bound {
            return sad;
        }
    }
    sad
}

fn search_block(
    cur: &FrameRgb,
    reference: &FrameRgb,
    x0: usize,
    y0: usize,
    size: usize,
    candidates: &[MotionVector],
) -> MotionVector {
    let mut best = candidates[0];
    let mut best_sad = block_sad(cur, reference, x0, y0, size, best, u64::MAX);
    for &mv in &candidates[1..] {
        if best_sad == 0 {
            break;
        }
        // strict improvement only, so earlier candidates win ties
        let sad = block_sad(cur, reference, x0, y0, size, mv, best_sad);
        if sad < best_sad {
            best_sad = sad;
            best = mv;
        }
    }
    best
}

fn motion_field(
    cur: &FrameRgb,
    reference: &FrameRgb,
    block_size: usize,
    candidates: &[MotionVector],
) -> MotionVectorField {
    let cols = cur.width() / block_size;
    let rows = cur.height() / block_size;
    let mut vectors = Vec::with_capacity(cols * rows);
    for by in 0..rows {
        for bx in 0..cols {
            vectors.push(search_block(
                cur,
                reference,
                bx * block_size,
                by * block_size,
                block_size,
                candidates,
            ));
        }
    }
    MotionVectorField::new(block_size, cols, rows, vectors).expect("grid size is cols*rows")
}

/// Exhaustive block matching of `cur` against `reference`.
///
/// Minimizes SAD over the `±search_range` window; ties go to the smaller
/// `|dx| + |dy|`, then to the earlier candidate in row-major scan order.
pub fn estimate_motion(
    cur: &FrameRgb,
    reference: &FrameRgb,
    block_size: usize,
    search_range: usize,
) -> Result<MotionVectorField, CodecError> {
    check_dims(&[reference.clone(), cur.clone()], block_size)?;
    Ok(motion_field(
        cur,
        reference,
        block_size,
        &candidate_order(search_range),
    ))
}

/// Motion-compensated prediction of a frame from its reference.
pub(crate) fn predict(reference: &FrameRgb, motion: &MotionVectorField) -> FrameRgb {
    let w = reference.width();
    let h = reference.height();
    let rd = reference.data();
    let mut out = vec![0u8; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            let mv = motion.at_pixel(x, y);
            let rx = clamp_coord(x as i64 - mv.dx as i64, w);
            let ry = clamp_coord(y as i64 - mv.dy as i64, h);
            let (o, r) = ((y * w + x) * 3, (ry * w + rx) * 3);
            out[o..o + 3].copy_from_slice(&rd[r..r + 3]);
        }
    }
    FrameRgb::new(w, h, out).expect("same dimensions as reference")
}

fn encode_pframe(cur: &FrameRgb, reference: &FrameRgb, block_size: usize, candidates: &[MotionVector]) -> PFrame {
    let motion = motion_field(cur, reference, block_size, candidates);
    let pred = predict(reference, &motion);
    let data = cur
        .data()
        .iter()
        .zip(pred.data())
        .map(|(&c, &p)| c as i16 - p as i16)
        .collect();
    let residual =
        ResidualFrame::new(cur.width(), cur.height(), data).expect("u8 differences fit [-255, 255]");
    PFrame { motion, residual }
}

fn check_dims(frames: &[FrameRgb], block_size: usize) -> Result<(), CodecError> {
    let first = frames.first().ok_or(CodecError::NoFrames)?;
    let (w, h) = (first.width(), first.height());
    for (index, f) in frames.iter().enumerate() {
        if f.width() != w || f.height() != h {
            return Err(CodecError::DimensionMismatch {
                index,
                width: f.width(),
                height: f.height(),
                expected_width: w,
                expected_height: h,
            });
        }
    }
    if block_size == 0 || w % block_size != 0 || h % block_size != 0 {
        return Err(CodecError::NotBlockAligned {
            width: w,
            height: h,
            block_size,
        });
    }
    Ok(())
}

/// Encodes one GOP: `frames[0]` becomes the I-frame and each later frame is
/// predicted from the frame right before it.
pub fn encode_gop(frames: &[FrameRgb], block_size: usize, search_range: usize) -> Result<Gop, CodecError> {
    check_dims(frames, block_size)?;
    let candidates = candidate_order(search_range);
    let pframes = frames
        .windows(2)
        .map(|pair| encode_pframe(&pair[1], &pair[0], block_size, &candidates))
        .collect();
    Ok(Gop {
        iframe: frames[0].clone(),
        pframes,
    })
}

/// Partitions `frames` into consecutive GOPs of `gop_size` (the last may be
/// shorter) and encodes each independently.
pub fn encode_stream(frames: &[FrameRgb], params: CodecParams) -> Result<GopStream, CodecError> {
    params.validate()?;
    check_dims(frames, params.block_size)?;
    let (w, h) = (frames[0].width(), frames[0].height());
    if w > u32::MAX as usize || h > u32::MAX as usize {
        return Err(CodecError::InvalidParams("frame too large".into()));
    }
    let gops = frames
        .chunks(params.gop_size)
        .map(|chunk| encode_gop(chunk, params.block_size, params.search_range))
        .collect::<Result<Vec<_>, _>>()?;
    let header = GopHeader {
        version: FORMAT_VERSION,
        width: w as u32,
        height: h as u32,
        gop_size: params.gop_size as u16,
        gop_count: gops.len() as u32,
        block_size: params.block_size as u16,
        search_range: params.search_range as u16,
    };
    Ok(GopStream { header, gops })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_frame(w: usize, h: usize, seed: u64) -> FrameRgb {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let data = (0..w * h * 3)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 56) as u8
            })
            .collect();
        FrameRgb::new(w, h, data).unwrap()
    }

    fn shifted_right(f: &FrameRgb, s: usize) -> FrameRgb {
        let mut out = f.clone();
        for y in 0..f.height() {
            for x in 0..f.width() {
                let src = x.saturating_sub(s);
                out.set_pixel(x, y, f.pixel(src, y));
            }
        }
        out
    }

    #[test]
    fn candidate_order_prefers_small_displacements() {
        let c = candidate_order(2);
        assert_eq!(c.len(), 25);
        assert_eq!(c[0], MotionVector::ZERO);
        assert_eq!(c[1], MotionVector::new(0, -1));
        assert_eq!(c[2], MotionVector::new(-1, 0));
        assert_eq!(c[3], MotionVector::new(1, 0));
        assert_eq!(c[4], MotionVector::new(0, 1));
    }

    #[test]
    fn static_video_has_zero_motion_and_residual() {
        let f = noise_frame(32, 32, 3);
        let frames = vec![f; 12];
        let s = encode_stream(&frames, CodecParams::default()).unwrap();
        assert_eq!(s.gops.len(), 1);
        assert_eq!(s.gops[0].pframes.len(), 11);
        for p in &s.gops[0].pframes {
            assert!(p.motion.vectors().iter().all(|v| *v == MotionVector::ZERO));
            assert!(p.residual.is_zero());
        }
    }

    #[test]
    fn flat_frames_tie_to_zero_vector() {
        let f = FrameRgb::filled(32, 32, [9, 9, 9]);
        let field = estimate_motion(&f, &f, 16, 7).unwrap();
        assert!(field.vectors().iter().all(|v| *v == MotionVector::ZERO));
    }

    #[test]
    fn global_shift_is_found_in_interior_blocks() {
        let f0 = noise_frame(64, 48, 11);
        let f1 = shifted_right(&f0, 3);
        let gop = encode_gop(&[f0, f1], 16, 7).unwrap();
        let p = &gop.pframes[0];
        for by in 0..p.motion.rows() {
            for bx in 1..p.motion.cols() {
                assert_eq!(p.motion.block(bx, by), MotionVector::new(3, 0), "block {bx},{by}");
            }
        }
        // interior residual is exactly zero
        for y in 0..48 {
            for x in 16..64 {
                for c in 0..3 {
                    assert_eq!(p.residual.data()[(y * 64 + x) * 3 + c], 0);
                }
            }
        }
    }

    #[test]
    fn shorter_last_gop() {
        let frames: Vec<_> = (0..30).map(|i| noise_frame(16, 16, i)).collect();
        let s = encode_stream(&frames, CodecParams::default()).unwrap();
        assert_eq!(s.gops.iter().map(Gop::len).collect::<Vec<_>>(), vec![12, 12, 6]);
        s.validate().unwrap();
    }

    #[test]
    fn rejects_bad_dimensions() {
        let a = noise_frame(32, 32, 1);
        let b = noise_frame(16, 32, 2);
        assert!(matches!(
            encode_stream(&[a.clone(), b], CodecParams::default()),
            Err(CodecError::DimensionMismatch { index: 1, .. })
        ));
        let c = noise_frame(24, 32, 2);
        assert!(matches!(
            encode_stream(&[c], CodecParams::default()),
            Err(CodecError::NotBlockAligned { .. })
        ));
        assert_eq!(encode_stream(&[], CodecParams::default()), Err(CodecError::NoFrames));
    }
}
