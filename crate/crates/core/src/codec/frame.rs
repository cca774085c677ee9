use super::CodecError;

/// An 8-bit RGB image, row-major, interleaved channels.
#[derive(Clone, PartialEq, Eq)]
pub struct FrameRgb {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for FrameRgb {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FrameRgb")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl FrameRgb {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, CodecError> {
        if width == 0 || height == 0 {
            return Err(CodecError::EmptyFrame);
        }
        if data.len() != width * height * 3 {
            return Err(CodecError::FrameLength {
                expected: width * height * 3,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

/// One block displacement. The content at `p` in the current frame comes from
/// `p - (dx, dy)` in the reference frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct MotionVector {
    pub dx: i16,
    pub dy: i16,
}

impl MotionVector {
    pub const ZERO: MotionVector = MotionVector { dx: 0, dy: 0 };

    pub fn new(dx: i16, dy: i16) -> Self {
        Self { dx, dy }
    }
}

/// Block-resolution motion field of one P-frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MotionVectorField {
    block_size: usize,
    cols: usize,
    rows: usize,
    vectors: Vec<MotionVector>,
}

impl MotionVectorField {
    pub fn new(
        block_size: usize,
        cols: usize,
        rows: usize,
        vectors: Vec<MotionVector>,
    ) -> Result<Self, CodecError> {
        if vectors.len() != cols * rows {
            return Err(CodecError::Malformed(format!(
                "motion field has {} vectors, expected {}x{}",
                vectors.len(),
                cols,
                rows
            )));
        }
        Ok(Self {
            block_size,
            cols,
            rows,
            vectors,
        })
    }

    pub fn zeros(block_size: usize, cols: usize, rows: usize) -> Self {
        Self {
            block_size,
            cols,
            rows,
            vectors: vec![MotionVector::ZERO; cols * rows],
        }
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn vectors(&self) -> &[MotionVector] {
        &self.vectors
    }

    #[inline]
    pub fn block(&self, bx: usize, by: usize) -> MotionVector {
        self.vectors[by * self.cols + bx]
    }

    /// Vector of the block that contains pixel `(x, y)`.
    #[inline]
    pub fn at_pixel(&self, x: usize, y: usize) -> MotionVector {
        self.block(x / self.block_size, y / self.block_size)
    }

    pub fn max_abs_component(&self) -> u16 {
        self.vectors
            .iter()
            .map(|v| v.dx.unsigned_abs().max(v.dy.unsigned_abs()))
            .max()
            .unwrap_or(0)
    }
}

/// Full-resolution signed residual, `current - prediction` per channel.
#[derive(Clone, PartialEq, Eq)]
pub struct ResidualFrame {
    width: usize,
    height: usize,
    data: Vec<i16>,
}

impl std::fmt::Debug for ResidualFrame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ResidualFrame")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl ResidualFrame {
    pub fn new(width: usize, height: usize, data: Vec<i16>) -> Result<Self, CodecError> {
        if data.len() != width * height * 3 {
            return Err(CodecError::FrameLength {
                expected: width * height * 3,
                actual: data.len(),
            });
        }
        if let Some(v) = data.iter().find(|v| !(-255..=255).contains(*v)) {
            return Err(CodecError::Malformed(format!(
                "residual value {v} outside [-255, 255]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[i16] {
        &self.data
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }
}

/// One predicted frame: block motion plus residual.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PFrame {
    pub motion: MotionVectorField,
    pub residual: ResidualFrame,
}

/// An I-frame followed by its P-frames.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gop {
    pub iframe: FrameRgb,
    pub pframes: Vec<PFrame>,
}

impl Gop {
    /// Number of frames in the GOP, I-frame included.
    pub fn len(&self) -> usize {
        self.pframes.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn p_count(&self) -> usize {
        self.pframes.len()
    }
}
