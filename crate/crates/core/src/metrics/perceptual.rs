//! Colour-difference metrics built on the Y'CbCr → CIELAB chain: DE100,
//! PSNRL100 and the SDR CIEDE2000 score.

use crate::colour::{
    apply_matrix, ciede2000, d65, eotf, rgb_to_xyz_matrix, xyz_to_lab_unchecked, LabColour, NormalisationPolicy,
    YcbcrDecoder, PQ_PEAK_NITS, SDR_PEAK_NITS,
};
use crate::media::{upsample_chroma_444, ColourTags, MatrixCoefficients, PlanarFrame, Primaries, Transfer};

use super::{MetricError, SCORE_CAP_DB};

/// Per-pixel conversion from integer Y'CbCr to CIELAB and luminance.
#[derive(Debug, Clone)]
pub struct LabPipeline {
    decoder: YcbcrDecoder,
    transfer: Transfer,
    to_xyz: [[f64; 3]; 3],
    white: crate::colour::Xyz,
    policy: NormalisationPolicy,
}

impl LabPipeline {
    /// Pipeline honouring the stream's own colour tags. The reference white
    /// is D65 at the display peak (10000 cd/m² for PQ, 100 cd/m² for gamma).
    pub fn for_stream(bit_depth: u8, tags: ColourTags, policy: NormalisationPolicy) -> Result<Self, MetricError> {
        let decoder = YcbcrDecoder::new(bit_depth, tags.range, tags.matrix)?;
        let to_xyz = rgb_to_xyz_matrix(tags.primaries)?;
        let peak = match tags.transfer {
            Transfer::Pq => PQ_PEAK_NITS,
            Transfer::Gamma => SDR_PEAK_NITS,
            Transfer::Unspecified => return Err(crate::colour::ColourError::UnknownTransfer.into()),
        };
        Ok(LabPipeline {
            decoder,
            transfer: tags.transfer,
            to_xyz,
            white: d65().scaled(peak),
            policy,
        })
    }

    /// Pipeline that reads the codes as BT.709 SDR regardless of tags, the
    /// way SDR tooling interprets its input.
    pub fn sdr(bit_depth: u8, tags: ColourTags) -> Result<Self, MetricError> {
        let sdr = ColourTags {
            primaries: Primaries::Bt709,
            transfer: Transfer::Gamma,
            matrix: MatrixCoefficients::Bt709,
            range: tags.range,
        };
        Self::for_stream(bit_depth, sdr, NormalisationPolicy::FACTOR_100)
    }

    #[inline]
    fn linear(&self, y: u16, cb: u16, cr: u16) -> [f64; 3] {
        let [r, g, b] = self.decoder.decode(y, cb, cr);
        // The transfer was validated at construction.
        let f = |v: f64| eotf(v, self.transfer).unwrap_or(0.0);
        [f(r), f(g), f(b)]
    }

    #[inline]
    pub fn lab(&self, y: u16, cb: u16, cr: u16) -> LabColour {
        let xyz = apply_matrix(&self.to_xyz, self.linear(y, cb, cr));
        // Non-negative RGB through a non-negative matrix: no domain check needed.
        xyz_to_lab_unchecked(xyz, self.white, self.policy)
    }

    /// Absolute luminance in cd/m².
    #[inline]
    pub fn luminance(&self, y: u16, cb: u16, cr: u16) -> f64 {
        let rgb = self.linear(y, cb, cr);
        let m = &self.to_xyz[1];
        m[0] * rgb[0] + m[1] * rgb[1] + m[2] * rgb[2]
    }
}

fn check_pair(reference: &PlanarFrame, test: &PlanarFrame) -> Result<(), MetricError> {
    if reference.info.colour != test.info.colour {
        return Err(MetricError::ColourTagMismatch);
    }
    if reference.info.bit_depth != test.info.bit_depth || reference.info.subsampling != test.info.subsampling {
        return Err(MetricError::FormatMismatch);
    }
    if reference.y.dims() != test.y.dims() {
        return Err(MetricError::DimensionMismatch {
            reference: reference.y.dims(),
            test: test.y.dims(),
        });
    }
    Ok(())
}

/// Per-pixel statistics of one frame pair through a [`LabPipeline`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabErrorStats {
    /// Mean of ΔE00².
    pub mean_de_sq: f64,
    /// Mean of ΔE00.
    pub mean_de: f64,
    /// Mean of |ΔL*|.
    pub mean_abs_dl: f64,
}

/// Accumulates colour-difference statistics over all pixels.
pub fn lab_error_stats(
    reference: &PlanarFrame,
    test: &PlanarFrame,
    pipeline: &LabPipeline,
) -> Result<LabErrorStats, MetricError> {
    check_pair(reference, test)?;
    let r = upsample_chroma_444(reference);
    let t = upsample_chroma_444(test);
    let n = r.y.data.len();
    let (mut de2, mut de, mut dl) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let a = pipeline.lab(r.y.data[i], r.cb.data[i], r.cr.data[i]);
        let b = pipeline.lab(t.y.data[i], t.cb.data[i], t.cr.data[i]);
        let d = ciede2000(a, b);
        de2 += d * d;
        de += d;
        dl += (a.l - b.l).abs();
    }
    let n = n as f64;
    Ok(LabErrorStats {
        mean_de_sq: de2 / n,
        mean_de: de / n,
        mean_abs_dl: dl / n,
    })
}

/// DE100 from a mean squared ΔE00: `10·log10(100² / mean ΔE²)`, capped.
pub fn de100_from_mean_sq(mean_de_sq: f64) -> f64 {
    if mean_de_sq <= 0.0 {
        return SCORE_CAP_DB;
    }
    (10.0 * (100.0 * 100.0 / mean_de_sq).log10()).min(SCORE_CAP_DB)
}

/// PSNRL100 from the mean absolute L* error: `20·log10(100 / MAE)`, capped.
pub fn psnrl100_from_mae(mae: f64) -> f64 {
    if mae <= 0.0 {
        return SCORE_CAP_DB;
    }
    (20.0 * (100.0 / mae).log10()).min(SCORE_CAP_DB)
}

/// SDR CIEDE2000 score: `45 − 20·log10(mean ΔE00)`, capped.
pub fn ciede2000_score_from_mean(mean_de: f64) -> f64 {
    if mean_de <= 0.0 {
        return SCORE_CAP_DB;
    }
    (45.0 - 20.0 * mean_de.log10()).min(SCORE_CAP_DB)
}

fn hdr_pipeline(frame: &PlanarFrame) -> Result<LabPipeline, MetricError> {
    LabPipeline::for_stream(frame.info.bit_depth, frame.info.colour, NormalisationPolicy::FACTOR_100)
}

/// DE100 of one frame pair.
pub fn de100(reference: &PlanarFrame, test: &PlanarFrame) -> Result<f64, MetricError> {
    let stats = lab_error_stats(reference, test, &hdr_pipeline(reference)?)?;
    Ok(de100_from_mean_sq(stats.mean_de_sq))
}

/// PSNRL100 of one frame pair.
pub fn psnrl100(reference: &PlanarFrame, test: &PlanarFrame) -> Result<f64, MetricError> {
    let stats = lab_error_stats(reference, test, &hdr_pipeline(reference)?)?;
    Ok(psnrl100_from_mae(stats.mean_abs_dl))
}

/// SDR CIEDE2000 score of one frame pair.
pub fn ciede2000_score(reference: &PlanarFrame, test: &PlanarFrame) -> Result<f64, MetricError> {
    let pipeline = LabPipeline::sdr(reference.info.bit_depth, reference.info.colour)?;
    let stats = lab_error_stats(reference, test, &pipeline)?;
    Ok(ciede2000_score_from_mean(stats.mean_de))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::{StreamInfo, Subsampling};
    use std::sync::Arc;

    #[test]
    fn definitions() {
        assert_eq!(de100_from_mean_sq(0.0), 100.0);
        assert!((de100_from_mean_sq(1.0) - 40.0).abs() < 1e-12);
        assert_eq!(psnrl100_from_mae(0.0), 100.0);
        assert!((psnrl100_from_mae(1.0) - 40.0).abs() < 1e-12);
        assert_eq!(ciede2000_score_from_mean(1.0), 45.0);
    }

    #[test]
    fn tag_mismatch_is_rejected() {
        let a = Arc::new(StreamInfo::new(4, 4, 10, Subsampling::Cs420));
        let b = Arc::new(StreamInfo::new(4, 4, 10, Subsampling::Cs420).with_colour(ColourTags::BT709));
        let fa = PlanarFrame::constant(a, 500, 512, 512);
        let fb = PlanarFrame::constant(b, 500, 512, 512);
        assert!(matches!(de100(&fa, &fb), Err(MetricError::ColourTagMismatch)));
    }

    #[test]
    fn white_is_lightness_100() {
        let p = LabPipeline::for_stream(10, ColourTags::BT2020_PQ, NormalisationPolicy::FACTOR_100).unwrap();
        let lab = p.lab(940, 512, 512);
        assert!((lab.l - 100.0).abs() < 1e-9);
        assert!(lab.a.abs() < 1e-6 && lab.b.abs() < 1e-6);
        assert!((p.luminance(940, 512, 512) - 10000.0).abs() < 1e-6);
    }
}
