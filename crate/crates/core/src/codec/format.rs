//! The `.gops` container.
//!
//! ```text
//! header   magic "GOPS" | version u16 | width u32 | height u32 | gop_size u16
//!          | gop_count u32 | block_size u16 | search_range u16
//! per GOP  I-frame: width*height*3 bytes, row-major RGB
//!          per P-frame: MV grid as (dx i16, dy i16) row-major,
//!                       then residual as i16 row-major RGB
//! ```
//!
//! All integers are little-endian. Every GOP except the last holds exactly
//! `gop_size - 1` P-frames; the last GOP's P-frame count is implied by the
//! bytes that remain.

use super::{
    CodecError, FrameRgb, Gop, GopHeader, GopStream, MotionVector, MotionVectorField, PFrame,
    ResidualFrame,
};

pub const MAGIC: [u8; 4] = *b"GOPS";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 24;

pub fn serialize(stream: &GopStream) -> Result<Vec<u8>, CodecError> {
    stream.validate()?;
    let h = &stream.header;
    let mut out = Vec::with_capacity(HEADER_LEN + stream.frame_count() * h.width() * h.height() * 6);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&h.version.to_le_bytes());
    out.extend_from_slice(&h.width.to_le_bytes());
    out.extend_from_slice(&h.height.to_le_bytes());
    out.extend_from_slice(&h.gop_size.to_le_bytes());
    out.extend_from_slice(&h.gop_count.to_le_bytes());
    out.extend_from_slice(&h.block_size.to_le_bytes());
    out.extend_from_slice(&h.search_range.to_le_bytes());
    for gop in &stream.gops {
        out.extend_from_slice(gop.iframe.data());
        for p in &gop.pframes {
            for v in p.motion.vectors() {
                out.extend_from_slice(&v.dx.to_le_bytes());
                out.extend_from_slice(&v.dy.to_le_bytes());
            }
            for r in p.residual.data() {
                out.extend_from_slice(&r.to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let available = self.buf.len() - self.pos;
        if available < n {
            return Err(CodecError::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

fn read_pframe(r: &mut Reader<'_>, h: &GopHeader) -> Result<PFrame, CodecError> {
    let (cols, rows) = (h.block_cols(), h.block_rows());
    let mv_bytes = r.take(cols * rows * 4)?;
    let vectors = mv_bytes
        .chunks_exact(4)
        .map(|c| {
            MotionVector::new(
                i16::from_le_bytes([c[0], c[1]]),
                i16::from_le_bytes([c[2], c[3]]),
            )
        })
        .collect();
    let motion = MotionVectorField::new(h.block_size(), cols, rows, vectors)?;
    let res_bytes = r.take(h.width() * h.height() * 6)?;
    let data = res_bytes
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]))
        .collect();
    let residual = ResidualFrame::new(h.width(), h.height(), data)?;
    Ok(PFrame { motion, residual })
}

pub fn deserialize(bytes: &[u8]) -> Result<GopStream, CodecError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(CodecError::BadMagic(magic));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(CodecError::UnsupportedVersion(version));
    }
    let header = GopHeader {
        version,
        width: r.u32()?,
        height: r.u32()?,
        gop_size: r.u16()?,
        gop_count: r.u32()?,
        block_size: r.u16()?,
        search_range: r.u16()?,
    };
    header.validate()?;
    let frame_bytes = header.width() * header.height() * 3;
    let pframe_bytes = header.block_cols() * header.block_rows() * 4 + frame_bytes * 2;
    let full = header.gop_size as usize - 1;
    let gop_count = header.gop_count as usize;
    let mut gops = Vec::with_capacity(gop_count.min(1 << 16));
    for g in 0..gop_count {
        let iframe = FrameRgb::new(header.width(), header.height(), r.take(frame_bytes)?.to_vec())?;
        let p_count = if g + 1 < gop_count {
            full
        } else {
            let rem = r.remaining();
            if !rem.is_multiple_of(pframe_bytes) {
                return Err(CodecError::Truncated {
                    offset: r.pos + rem,
                    needed: pframe_bytes - rem % pframe_bytes,
                    available: 0,
                });
            }
            let n = rem / pframe_bytes;
            if n > full {
                return Err(CodecError::Malformed(format!(
                    "{} trailing bytes after the last GOP",
                    rem - full * pframe_bytes
                )));
            }
            n
        };
        let pframes = (0..p_count)
            .map(|_| read_pframe(&mut r, &header))
            .collect::<Result<Vec<_>, _>>()?;
        gops.push(Gop { iframe, pframes });
    }
    if r.remaining() != 0 {
        return Err(CodecError::Malformed(format!(
            "{} trailing bytes after the last GOP",
            r.remaining()
        )));
    }
    let stream = GopStream { header, gops };
    stream.validate()?;
    Ok(stream)
}
