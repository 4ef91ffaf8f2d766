//! Y4M container I/O, planar frames and spatial resampling.

mod frame;
mod resample;
mod y4m;

pub use frame::{
    ColourTags, MatrixCoefficients, PlanarFrame, Plane, Primaries, SampleRange, StreamInfo, Subsampling, Transfer,
};
pub use resample::{lanczos5_resample, lanczos_kernel, upsample_chroma_444, LANCZOS_LOBES};
pub use y4m::{header_line, parse_y4m_header, read_y4m, read_y4m_file, write_y4m, write_y4m_file, Y4mReader};

#[derive(Debug, thiserror::Error)]
pub enum MediaError {
    #[error("missing YUV4MPEG2 magic")]
    MissingMagic,
    #[error("unsupported colourspace token C{0}")]
    UnsupportedColourspace(String),
    #[error("malformed rational {0:?}")]
    MalformedRational(String),
    #[error("missing required header parameter {0}")]
    MissingParameter(char),
    #[error("malformed header: {0}")]
    Malformed(String),
    #[error("invalid stream info: {0}")]
    InvalidInfo(String),
    #[error("truncated stream: {0}")]
    Truncated(&'static str),
    #[error("inconsistent input: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
