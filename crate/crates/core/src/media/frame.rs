use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::MediaError;

/// Chroma subsampling layouts handled by the toolchain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subsampling {
    Cs420,
    Cs444,
}

impl Subsampling {
    /// Chroma plane dimensions for a luma plane of `width`×`height`.
    pub fn chroma_dims(self, width: usize, height: usize) -> (usize, usize) {
        match self {
            Subsampling::Cs420 => (width.div_ceil(2), height.div_ceil(2)),
            Subsampling::Cs444 => (width, height),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Primaries {
    Bt709,
    Bt2020,
    Unspecified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transfer {
    /// BT.709 / BT.1886 display gamma.
    Gamma,
    /// SMPTE ST 2084 perceptual quantizer.
    Pq,
    Unspecified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatrixCoefficients {
    Bt709,
    /// BT.2020 non-constant luminance.
    Bt2020Ncl,
    Unspecified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SampleRange {
    Limited,
    Full,
}

/// Colour description attached to a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColourTags {
    pub primaries: Primaries,
    pub transfer: Transfer,
    pub matrix: MatrixCoefficients,
    pub range: SampleRange,
}

impl ColourTags {
    pub const BT2020_PQ: ColourTags = ColourTags {
        primaries: Primaries::Bt2020,
        transfer: Transfer::Pq,
        matrix: MatrixCoefficients::Bt2020Ncl,
        range: SampleRange::Limited,
    };

    pub const BT709: ColourTags = ColourTags {
        primaries: Primaries::Bt709,
        transfer: Transfer::Gamma,
        matrix: MatrixCoefficients::Bt709,
        range: SampleRange::Limited,
    };

    /// Tags assumed when a stream carries no explicit colour description:
    /// 10-bit content is treated as HDR (BT.2020/PQ), 8-bit as BT.709.
    pub fn default_for_depth(bit_depth: u8) -> ColourTags {
        if bit_depth > 8 {
            Self::BT2020_PQ
        } else {
            Self::BT709
        }
    }
}

/// Container and pixel-format facts for one stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamInfo {
    pub width: usize,
    pub height: usize,
    pub fps_num: u32,
    pub fps_den: u32,
    pub bit_depth: u8,
    pub subsampling: Subsampling,
    pub colour: ColourTags,
    /// Interlacing token, kept verbatim (`'p'` for progressive).
    pub interlace: char,
    /// Pixel aspect ratio, if the header carried one.
    pub aspect: Option<(u32, u32)>,
    /// Header parameters this crate does not interpret, in original order.
    pub extra_tags: Vec<String>,
}

impl StreamInfo {
    pub fn new(width: usize, height: usize, bit_depth: u8, subsampling: Subsampling) -> Self {
        StreamInfo {
            width,
            height,
            fps_num: 24,
            fps_den: 1,
            bit_depth,
            subsampling,
            colour: ColourTags::default_for_depth(bit_depth),
            interlace: 'p',
            aspect: None,
            extra_tags: Vec::new(),
        }
    }

    pub fn with_fps(mut self, num: u32, den: u32) -> Self {
        self.fps_num = num;
        self.fps_den = den;
        self
    }

    pub fn with_colour(mut self, colour: ColourTags) -> Self {
        self.colour = colour;
        self
    }

    pub fn validate(&self) -> Result<(), MediaError> {
        if self.width == 0 || self.height == 0 {
            return Err(MediaError::InvalidInfo(format!(
                "dimensions must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        if self.bit_depth != 8 && self.bit_depth != 10 {
            return Err(MediaError::InvalidInfo(format!(
                "unsupported bit depth {}",
                self.bit_depth
            )));
        }
        if self.fps_den == 0 {
            return Err(MediaError::InvalidInfo("frame rate denominator is zero".into()));
        }
        Ok(())
    }

    pub fn fps(&self) -> f64 {
        f64::from(self.fps_num) / f64::from(self.fps_den)
    }

    pub fn max_sample(&self) -> u16 {
        ((1u32 << self.bit_depth) - 1) as u16
    }

    pub fn chroma_dims(&self) -> (usize, usize) {
        self.subsampling.chroma_dims(self.width, self.height)
    }

    pub fn bytes_per_sample(&self) -> usize {
        if self.bit_depth > 8 {
            2
        } else {
            1
        }
    }

    /// Payload size of one frame in bytes, excluding the `FRAME` marker line.
    pub fn frame_bytes(&self) -> usize {
        let (cw, ch) = self.chroma_dims();
        (self.width * self.height + 2 * cw * ch) * self.bytes_per_sample()
    }
}

/// One plane of unsigned integer samples, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u16>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<u16>) -> Self {
        assert_eq!(data.len(), width * height, "plane data length mismatch");
        Plane { width, height, data }
    }

    pub fn filled(width: usize, height: usize, value: u16) -> Self {
        Plane {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u16) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.data[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[u16] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

impl fmt::Debug for Plane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Plane({}x{})", self.width, self.height)
    }
}

/// One decoded picture. Immutable once built; cheap to clone the stream info.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanarFrame {
    pub y: Plane,
    pub cb: Plane,
    pub cr: Plane,
    pub info: Arc<StreamInfo>,
}

impl PlanarFrame {
    /// Builds a frame, checking plane geometry and sample range against `info`.
    pub fn new(info: Arc<StreamInfo>, y: Plane, cb: Plane, cr: Plane) -> Result<Self, MediaError> {
        let frame = PlanarFrame { y, cb, cr, info };
        frame.check()?;
        Ok(frame)
    }

    /// A frame with every plane set to a constant.
    pub fn constant(info: Arc<StreamInfo>, y: u16, cb: u16, cr: u16) -> Self {
        let (cw, ch) = info.chroma_dims();
        PlanarFrame {
            y: Plane::filled(info.width, info.height, y),
            cb: Plane::filled(cw, ch, cb),
            cr: Plane::filled(cw, ch, cr),
            info,
        }
    }

    pub fn planes(&self) -> [&Plane; 3] {
        [&self.y, &self.cb, &self.cr]
    }

    pub fn check(&self) -> Result<(), MediaError> {
        let info = &self.info;
        if self.y.dims() != (info.width, info.height) {
            return Err(MediaError::Inconsistent(format!(
                "luma plane is {}x{}, stream is {}x{}",
                self.y.width, self.y.height, info.width, info.height
            )));
        }
        let chroma = info.chroma_dims();
        for (name, plane) in [("cb", &self.cb), ("cr", &self.cr)] {
            if plane.dims() != chroma {
                return Err(MediaError::Inconsistent(format!(
                    "{name} plane is {}x{}, expected {}x{}",
                    plane.width, plane.height, chroma.0, chroma.1
                )));
            }
        }
        let max = info.max_sample();
        if self.planes().iter().any(|p| p.data.iter().any(|&v| v > max)) {
            return Err(MediaError::Inconsistent(format!(
                "sample exceeds {max} for {}-bit stream",
                info.bit_depth
            )));
        }
        Ok(())
    }
}
