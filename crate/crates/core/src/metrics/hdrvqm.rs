//! HDR-VQM: a pluggable distortion backend and the similarity/dB transform.

use serde::{Deserialize, Serialize};

use crate::colour::NormalisationPolicy;
use crate::media::{upsample_chroma_444, PlanarFrame};

use super::perceptual::LabPipeline;
use super::{MetricError, SCORE_CAP_DB};

/// Distortion `Q` (lower is better) and the derived similarity and dB score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HdrVqmScore {
    pub q: f64,
    pub similarity: f64,
    pub db: f64,
    /// Set when `Q ≥ ln 3`, where the dB score is floored at zero.
    pub saturated: bool,
}

/// Maps a raw distortion to the similarity and dB scales.
///
/// `s = 4/(1 + e^Q) − 1` and `dB = −10·log10(1 − s)`, capped at 100 dB.
/// `s` reaches zero at `Q = ln 3`; beyond that the dB score is floored at 0.
pub fn hdrvqm_to_db(q: f64) -> HdrVqmScore {
    let q = q.max(0.0);
    let similarity = 4.0 / (1.0 + q.exp()) - 1.0;
    let saturated = q >= 3f64.ln();
    let db = if saturated {
        0.0
    } else {
        // 1 − s rewritten as 2·(e^Q − 1)/(1 + e^Q) to keep precision near Q = 0.
        let gap = 2.0 * q.exp_m1() / (1.0 + q.exp());
        if gap <= 0.0 {
            SCORE_CAP_DB
        } else {
            (-10.0 * gap.log10()).clamp(0.0, SCORE_CAP_DB)
        }
    };
    HdrVqmScore {
        q,
        similarity,
        db,
        saturated,
    }
}

/// Source of the raw HDR-VQM distortion.
pub trait HdrVqmBackend: Send + Sync {
    /// Identifier recorded in report metadata.
    fn id(&self) -> &str;

    /// Distortion of one frame pair.
    fn frame_distortion(&self, reference: &PlanarFrame, test: &PlanarFrame) -> Result<f64, MetricError>;

    /// Temporal pooling of per-frame distortions.
    fn pool(&self, per_frame: &[f64]) -> f64 {
        per_frame.iter().sum::<f64>() / per_frame.len() as f64
    }
}

/// Default backend: mean squared error of perceptually encoded luminance.
///
/// Absolute luminance (cd/m²) is encoded with the PQ inverse EOTF, which is
/// perceptually uniform across 0–10000 cd/m², normalised to `[0, 1]`. The
/// per-frame score is the MSE of those values and the sequence score their
/// temporal mean, so `Q ∈ [0, 1]`. This is not the Gabor-filter HDR-VQM and
/// its scores must not be compared with that metric.
#[derive(Debug, Clone, Copy, Default)]
pub struct PuMseBackend;

impl PuMseBackend {
    pub const ID: &'static str = "pu-mse/pq-encoding/temporal-mean";
}

/// PU value of an absolute luminance.
pub fn pu_encode(luminance: f64) -> f64 {
    crate::colour::pq_inverse_eotf(luminance.max(0.0)).unwrap_or(0.0)
}

impl HdrVqmBackend for PuMseBackend {
    fn id(&self) -> &str {
        Self::ID
    }

    fn frame_distortion(&self, reference: &PlanarFrame, test: &PlanarFrame) -> Result<f64, MetricError> {
        if reference.info.colour != test.info.colour {
            return Err(MetricError::ColourTagMismatch);
        }
        if reference.y.dims() != test.y.dims() || reference.info.subsampling != test.info.subsampling {
            return Err(MetricError::DimensionMismatch {
                reference: reference.y.dims(),
                test: test.y.dims(),
            });
        }
        let pipeline = LabPipeline::for_stream(
            reference.info.bit_depth,
            reference.info.colour,
            NormalisationPolicy::FACTOR_100,
        )?;
        let r = upsample_chroma_444(reference);
        let t = upsample_chroma_444(test);
        let n = r.y.data.len();
        let mut sse = 0.0;
        for i in 0..n {
            let a = pu_encode(pipeline.luminance(r.y.data[i], r.cb.data[i], r.cr.data[i]));
            let b = pu_encode(pipeline.luminance(t.y.data[i], t.cb.data[i], t.cr.data[i]));
            sse += (a - b) * (a - b);
        }
        Ok(sse / n as f64)
    }
}

/// Sequence-level distortion with `backend`.
pub fn hdrvqm_distortion(
    backend: &dyn HdrVqmBackend,
    reference: &[PlanarFrame],
    test: &[PlanarFrame],
) -> Result<f64, MetricError> {
    if reference.len() != test.len() {
        return Err(MetricError::LengthMismatch {
            reference: reference.len(),
            test: test.len(),
        });
    }
    if reference.is_empty() {
        return Err(MetricError::Empty);
    }
    let per_frame = reference
        .iter()
        .zip(test)
        .map(|(a, b)| backend.frame_distortion(a, b))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(backend.pool(&per_frame))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_distortion_caps() {
        let s = hdrvqm_to_db(0.0);
        assert_eq!(s.similarity, 1.0);
        assert_eq!(s.db, SCORE_CAP_DB);
        assert!(!s.saturated);
    }

    #[test]
    fn ln3_is_zero_db() {
        let s = hdrvqm_to_db(3f64.ln());
        assert!(s.similarity.abs() < 1e-12);
        assert!(s.db.abs() < 1e-9);
        assert!(s.saturated);
        let beyond = hdrvqm_to_db(2.0);
        assert_eq!(beyond.db, 0.0);
        assert!(beyond.saturated);
    }

    #[test]
    fn half_distortion() {
        let s = hdrvqm_to_db(0.5);
        let expected_s = 4.0 / (1.0 + 0.5f64.exp()) - 1.0;
        assert!((s.similarity - expected_s).abs() < 1e-15);
        assert!((s.similarity - 0.5102).abs() < 1e-4);
        assert!((s.db - 3.10).abs() < 5e-3);
    }

    #[test]
    fn pu_encoding_range() {
        assert!(pu_encode(0.0) < 1e-6);
        assert!((pu_encode(10000.0) - 1.0).abs() < 1e-12);
    }
}
