//! A lossless GOP-structured video codec.
//!
//! Frames are split into groups of pictures. The first frame of each group is
//! stored raw (the I-frame); every following frame is stored as block motion
//! against the frame immediately before it plus a full-resolution residual.
//! Reference coordinates are clamped to the frame at borders, for both
//! compensation and accumulation.

mod decode;
mod encode;
mod format;
mod frame;

pub use decode::{decode_full, decode_gop, decode_gop_partial, reconstruct_from_partial, PartialSample};
pub use encode::{encode_gop, encode_stream, estimate_motion};
pub use format::{deserialize, serialize, FORMAT_VERSION, HEADER_LEN, MAGIC};
pub use frame::{FrameRgb, Gop, MotionVector, MotionVectorField, PFrame, ResidualFrame};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("frame has zero width or height")]
    EmptyFrame,
    #[error("frame buffer length {actual}, expected {expected}")]
    FrameLength { expected: usize, actual: usize },
    #[error("no frames to encode")]
    NoFrames,
    #[error("frame {index} is {width}x{height}, expected {expected_width}x{expected_height}")]
    DimensionMismatch {
        index: usize,
        width: usize,
        height: usize,
        expected_width: usize,
        expected_height: usize,
    },
    #[error("{width}x{height} is not a multiple of block size {block_size}")]
    NotBlockAligned {
        width: usize,
        height: usize,
        block_size: usize,
    },
    #[error("invalid codec parameter: {0}")]
    InvalidParams(String),
    #[error("bad magic {0:?}, expected \"GOPS\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated input: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("p_index {p_index} out of range 1..={p_count}")]
    PIndexOutOfRange { p_index: usize, p_count: usize },
    #[error("malformed stream: {0}")]
    Malformed(String),
}

/// Encoder settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodecParams {
    /// Frames per GOP, I-frame included.
    pub gop_size: usize,
    pub block_size: usize,
    pub search_range: usize,
}

impl Default for CodecParams {
    fn default() -> Self {
        Self {
            gop_size: 12,
            block_size: 16,
            search_range: 7,
        }
    }
}

impl CodecParams {
    pub fn validate(&self) -> Result<(), CodecError> {
        if self.gop_size < 2 || self.gop_size > u16::MAX as usize {
            return Err(CodecError::InvalidParams(format!(
                "gop_size {} must be in 2..=65535",
                self.gop_size
            )));
        }
        if self.block_size == 0 || self.block_size > u16::MAX as usize {
            return Err(CodecError::InvalidParams(format!(
                "block_size {} must be in 1..=65535",
                self.block_size
            )));
        }
        if self.search_range > i16::MAX as usize {
            return Err(CodecError::InvalidParams(format!(
                "search_range {} exceeds i16 range",
                self.search_range
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GopHeader {
    pub version: u16,
    pub width: u32,
    pub height: u32,
    pub gop_size: u16,
    pub gop_count: u32,
    pub block_size: u16,
    pub search_range: u16,
}

impl GopHeader {
    pub fn width(&self) -> usize {
        self.width as usize
    }

    pub fn height(&self) -> usize {
        self.height as usize
    }

    pub fn block_size(&self) -> usize {
        self.block_size as usize
    }

    pub fn block_cols(&self) -> usize {
        self.width() / self.block_size()
    }

    pub fn block_rows(&self) -> usize {
        self.height() / self.block_size()
    }

    pub fn params(&self) -> CodecParams {
        CodecParams {
            gop_size: self.gop_size as usize,
            block_size: self.block_size as usize,
            search_range: self.search_range as usize,
        }
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        if self.version != FORMAT_VERSION {
            return Err(CodecError::UnsupportedVersion(self.version));
        }
        if self.gop_size < 2 {
            return Err(CodecError::Malformed(format!(
                "gop_size {} < 2",
                self.gop_size
            )));
        }
        if self.width == 0 || self.height == 0 || self.block_size == 0 {
            return Err(CodecError::Malformed("zero dimension in header".into()));
        }
        if !self.width.is_multiple_of(self.block_size as u32) || !self.height.is_multiple_of(self.block_size as u32) {
            return Err(CodecError::NotBlockAligned {
                width: self.width(),
                height: self.height(),
                block_size: self.block_size(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GopStream {
    pub header: GopHeader,
    pub gops: Vec<Gop>,
}

impl GopStream {
    pub fn frame_count(&self) -> usize {
        self.gops.iter().map(Gop::len).sum()
    }

    pub fn gop_count(&self) -> usize {
        self.gops.len()
    }

    /// Index of the first frame of GOP `g` in display order.
    pub fn gop_start(&self, g: usize) -> usize {
        self.gops[..g].iter().map(Gop::len).sum()
    }

    /// Checks every structural invariant of the stream.
    pub fn validate(&self) -> Result<(), CodecError> {
        let h = &self.header;
        h.validate()?;
        if self.gops.len() != h.gop_count as usize {
            return Err(CodecError::Malformed(format!(
                "header declares {} GOPs, stream holds {}",
                h.gop_count,
                self.gops.len()
            )));
        }
        let full = h.gop_size as usize - 1;
        for (g, gop) in self.gops.iter().enumerate() {
            let last = g + 1 == self.gops.len();
            if gop.pframes.len() > full || (!last && gop.pframes.len() != full) {
                return Err(CodecError::Malformed(format!(
                    "GOP {g} has {} P-frames, expected {full}",
                    gop.pframes.len()
                )));
            }
            if gop.iframe.width() != h.width() || gop.iframe.height() != h.height() {
                return Err(CodecError::Malformed(format!(
                    "GOP {g} I-frame dimensions differ from header"
                )));
            }
            for (i, p) in gop.pframes.iter().enumerate() {
                let m = &p.motion;
                if m.cols() != h.block_cols()
                    || m.rows() != h.block_rows()
                    || m.block_size() != h.block_size()
                {
                    return Err(CodecError::Malformed(format!(
                        "GOP {g} P-frame {} motion grid mismatch",
                        i + 1
                    )));
                }
                if m.max_abs_component() > h.search_range {
                    return Err(CodecError::Malformed(format!(
                        "GOP {g} P-frame {} motion exceeds search range {}",
                        i + 1,
                        h.search_range
                    )));
                }
                if p.residual.width() != h.width() || p.residual.height() != h.height() {
                    return Err(CodecError::Malformed(format!(
                        "GOP {g} P-frame {} residual dimensions differ from header",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn clamp_coord(v: i64, len: usize) -> usize {
    v.clamp(0, len as i64 - 1) as usize
}
