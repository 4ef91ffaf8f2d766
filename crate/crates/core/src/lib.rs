//! Rate-distortion laboratory for HDR video.
//!
//! The crate bundles the pieces needed to tune per-clip Lagrange multiplier
//! modifiers against HDR quality metrics:
//!
//! - [`media`]: Y4M I/O, planar frames, chroma upsampling, Lanczos resampling.
//! - [`colour`]: PQ transfer, Y'CbCr/RGB/XYZ/CIELAB conversion, CIEDE2000.
//! - [`metrics`]: PSNR, wPSNR, DE100, PSNRL100, MS-SSIM and HDR-VQM scores.
//! - [`rd`]: rate-quality curves, PCHIP interpolation, BD-Rate.
//! - [`harness`]: encode requests, chroma qp offsets, mock and external encoders, caching.
//! - [`optimizer`]: Powell direct search and the BD-Rate cost functions.
//! - [`campaign`]: corpus-wide runs, cross-metric tables, Spearman correlation.

pub mod campaign;
pub mod colour;
pub mod harness;
pub mod media;
pub mod metrics;
pub mod optimizer;
pub mod rd;
