//! Transfer functions and colour-space conversion for the HDR metrics.

mod ciede2000;
mod convert;
mod transfer;

pub use ciede2000::ciede2000;
pub(crate) use convert::{apply as apply_matrix, xyz_to_lab_unchecked};
pub use convert::{
    d65, eotf, luma_coefficients, rgb_to_linear, rgb_to_xyz, rgb_to_xyz_matrix, xyz_to_lab, ycbcr_to_rgb, LabColour,
    LinearRgbFrame, NormalisationPolicy, RgbFrame, Xyz, YcbcrDecoder, D65_CHROMATICITY,
};
pub use transfer::{gamma_eotf, pq_eotf, pq_inverse_eotf, PQ_PEAK_NITS, SDR_PEAK_NITS};

#[derive(Debug, thiserror::Error)]
pub enum ColourError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unknown Y'CbCr matrix tag")]
    UnknownMatrix,
    #[error("unknown colour primaries tag")]
    UnknownPrimaries,
    #[error("unknown transfer characteristics tag")]
    UnknownTransfer,
    #[error("conversion requires 4:4:4 input")]
    NotFullResolution,
}
