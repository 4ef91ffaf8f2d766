//! PSNR and luma-weighted PSNR.

use crate::media::{PlanarFrame, Plane, Subsampling};

use super::{MetricError, SCORE_CAP_DB};

/// Converts a mean squared error to dB against `peak`, capped at 100 dB.
pub fn mse_to_db(mse: f64, peak: f64) -> f64 {
    if mse <= 0.0 {
        return SCORE_CAP_DB;
    }
    (10.0 * (peak * peak / mse).log10()).min(SCORE_CAP_DB)
}

fn check_dims(a: &Plane, b: &Plane) -> Result<(), MetricError> {
    if a.dims() != b.dims() {
        return Err(MetricError::DimensionMismatch {
            reference: a.dims(),
            test: b.dims(),
        });
    }
    Ok(())
}

fn check_frames(a: &PlanarFrame, b: &PlanarFrame) -> Result<(), MetricError> {
    if a.info.bit_depth != b.info.bit_depth || a.info.subsampling != b.info.subsampling {
        return Err(MetricError::FormatMismatch);
    }
    for (pa, pb) in a.planes().into_iter().zip(b.planes()) {
        check_dims(pa, pb)?;
    }
    Ok(())
}

/// Mean squared error between two planes of equal size.
pub fn plane_mse(reference: &Plane, test: &Plane) -> Result<f64, MetricError> {
    check_dims(reference, test)?;
    let sse: u64 = reference
        .data
        .iter()
        .zip(&test.data)
        .map(|(&a, &b)| {
            let d = i64::from(a) - i64::from(b);
            (d * d) as u64
        })
        .sum();
    Ok(sse as f64 / reference.data.len() as f64)
}

/// PSNR of one plane; `peak` is `2^bit_depth − 1`.
pub fn psnr_plane(reference: &Plane, test: &Plane, peak: f64) -> Result<f64, MetricError> {
    Ok(mse_to_db(plane_mse(reference, test)?, peak))
}

/// Plane weights for averaging: 4:1:1 for 4:2:0, 1:1:1 for 4:4:4.
pub fn plane_weights(subsampling: Subsampling) -> [f64; 3] {
    match subsampling {
        Subsampling::Cs420 => [4.0, 1.0, 1.0],
        Subsampling::Cs444 => [1.0, 1.0, 1.0],
    }
}

/// Per-plane PSNR (Y, Cb, Cr) and the MSE-weighted average, in that order.
pub fn psnr_frame(reference: &PlanarFrame, test: &PlanarFrame) -> Result<[f64; 4], MetricError> {
    check_frames(reference, test)?;
    let peak = f64::from(reference.info.max_sample());
    let mse = [
        plane_mse(&reference.y, &test.y)?,
        plane_mse(&reference.cb, &test.cb)?,
        plane_mse(&reference.cr, &test.cr)?,
    ];
    let w = plane_weights(reference.info.subsampling);
    let avg = (w[0] * mse[0] + w[1] * mse[1] + w[2] * mse[2]) / (w[0] + w[1] + w[2]);
    Ok([
        mse_to_db(mse[0], peak),
        mse_to_db(mse[1], peak),
        mse_to_db(mse[2], peak),
        mse_to_db(avg, peak),
    ])
}

/// PSNR-AVG: plane MSEs averaged with [`plane_weights`] before the log.
pub fn psnr_avg(reference: &PlanarFrame, test: &PlanarFrame) -> Result<f64, MetricError> {
    Ok(psnr_frame(reference, test)?[3])
}

/// Reference luma code (on the 10-bit scale) at which the weight is exactly 1.
pub const WEIGHT_ANCHOR_CODE: u16 = 500;
pub const WEIGHT_MIN: f64 = 0.5;
pub const WEIGHT_MAX: f64 = 4.0;

/// Weight for a 10-bit-scale luma value.
///
/// `2^(d/3)` with `d = clip(0.015·Y − 7.5, −3, 6)`: flat at 0.5 below code
/// 300, rising linearly in dB to 4.0 at code 900 and above.
pub fn luma_weight_10bit(y10: f64) -> f64 {
    let d = (0.015 * y10 - 1.5 - 6.0).clamp(-3.0, 6.0);
    2f64.powf(d / 3.0)
}

/// Weight for a normalised luma code in `[0, 1]`.
pub fn luma_weight(code: f64) -> f64 {
    luma_weight_10bit(code.clamp(0.0, 1.0) * 1023.0)
}

/// Weight table indexed by integer luma code for the given bit depth.
pub fn luma_weight_table(bit_depth: u8) -> Vec<f64> {
    let scale = f64::from(1u32 << (10 - bit_depth.min(10)));
    (0..(1u32 << bit_depth))
        .map(|c| luma_weight_10bit(f64::from(c) * scale))
        .collect()
}

/// Per-sample weights for each plane of `reference`.
///
/// Luma uses the co-located sample; 4:2:0 chroma uses the mean of the 2×2
/// luma neighbourhood (clamped at the picture edge).
pub fn plane_weight_maps(reference: &PlanarFrame, weight: &dyn Fn(f64) -> f64) -> [Vec<f64>; 3] {
    let max = f64::from(reference.info.max_sample());
    let y = &reference.y;
    let luma: Vec<f64> = y.data.iter().map(|&v| weight(f64::from(v) / max)).collect();
    let chroma = match reference.info.subsampling {
        Subsampling::Cs444 => luma.clone(),
        Subsampling::Cs420 => {
            let (cw, ch) = reference.info.chroma_dims();
            let mut out = Vec::with_capacity(cw * ch);
            for cy in 0..ch {
                let y0 = 2 * cy;
                let y1 = (y0 + 1).min(y.height - 1);
                for cx in 0..cw {
                    let x0 = 2 * cx;
                    let x1 = (x0 + 1).min(y.width - 1);
                    let sum = u32::from(y.get(x0, y0))
                        + u32::from(y.get(x1, y0))
                        + u32::from(y.get(x0, y1))
                        + u32::from(y.get(x1, y1));
                    out.push(weight(f64::from(sum) / 4.0 / max));
                }
            }
            out
        }
    };
    [luma, chroma.clone(), chroma]
}

/// Weighted MSE `Σ wᵢeᵢ² / Σ wᵢ`.
pub fn weighted_mse(reference: &Plane, test: &Plane, weights: &[f64]) -> Result<f64, MetricError> {
    check_dims(reference, test)?;
    if weights.len() != reference.data.len() {
        return Err(MetricError::DimensionMismatch {
            reference: reference.dims(),
            test: (weights.len(), 1),
        });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&a, &b), &w) in reference.data.iter().zip(&test.data).zip(weights) {
        let e = f64::from(a) - f64::from(b);
        num += w * e * e;
        den += w;
    }
    Ok(num / den)
}

/// wPSNR of one plane with explicit per-sample weights.
pub fn wpsnr_plane(reference: &Plane, test: &Plane, weights: &[f64], peak: f64) -> Result<f64, MetricError> {
    Ok(mse_to_db(weighted_mse(reference, test, weights)?, peak))
}

/// wPSNR for Y, Cb, Cr and their arithmetic mean in dB, using `weight`
/// as the luma-to-weight mapping.
pub fn wpsnr_frame_with(
    reference: &PlanarFrame,
    test: &PlanarFrame,
    weight: &dyn Fn(f64) -> f64,
) -> Result<[f64; 4], MetricError> {
    check_frames(reference, test)?;
    let peak = f64::from(reference.info.max_sample());
    let maps = plane_weight_maps(reference, weight);
    let mut out = [0.0; 4];
    for (i, (pr, pt)) in reference.planes().into_iter().zip(test.planes()).enumerate() {
        out[i] = wpsnr_plane(pr, pt, &maps[i], peak)?;
    }
    out[3] = (out[0] + out[1] + out[2]) / 3.0;
    Ok(out)
}

/// wPSNR-Y/U/V/AVG with the standard luma weighting.
pub fn wpsnr_frame(reference: &PlanarFrame, test: &PlanarFrame) -> Result<[f64; 4], MetricError> {
    wpsnr_frame_with(reference, test, &luma_weight)
}

/// wPSNR-AVG: mean of the three plane scores in dB.
pub fn wpsnr_avg(reference: &PlanarFrame, test: &PlanarFrame) -> Result<f64, MetricError> {
    Ok(wpsnr_frame(reference, test)?[3])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::StreamInfo;
    use std::sync::Arc;

    fn info(sub: Subsampling) -> Arc<StreamInfo> {
        Arc::new(StreamInfo::new(8, 8, 10, sub))
    }

    #[test]
    fn identical_planes_cap() {
        let p = Plane::from_fn(8, 8, |x, y| (x * y) as u16);
        assert_eq!(psnr_plane(&p, &p, 1023.0).unwrap(), 100.0);
    }

    #[test]
    fn unit_error_ten_bit() {
        let a = Plane::filled(8, 8, 100);
        let b = Plane::filled(8, 8, 101);
        let expected = 10.0 * (1023.0f64 * 1023.0).log10();
        assert!((psnr_plane(&a, &b, 1023.0).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 60.2).abs() < 0.01);
    }

    #[test]
    fn maximal_error_is_zero_db() {
        let a = Plane::filled(4, 4, 0);
        let b = Plane::filled(4, 4, 1023);
        assert_eq!(psnr_plane(&a, &b, 1023.0).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let a = Plane::filled(4, 4, 0);
        let b = Plane::filled(4, 5, 0);
        assert!(matches!(
            psnr_plane(&a, &b, 1023.0),
            Err(MetricError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn psnr_avg_luma_only_error() {
        let i = info(Subsampling::Cs420);
        let a = PlanarFrame::constant(Arc::clone(&i), 400, 512, 512);
        let b = PlanarFrame::constant(i, 403, 512, 512);
        let s = psnr_frame(&a, &b).unwrap();
        assert_eq!(s[1], 100.0);
        assert!((s[3] - (s[0] + 10.0 * (6.0f64 / 4.0).log10())).abs() < 1e-12);
    }

    #[test]
    fn psnr_avg_equal_mse() {
        let i = info(Subsampling::Cs420);
        let a = PlanarFrame::constant(Arc::clone(&i), 400, 500, 600);
        let b = PlanarFrame::constant(i, 402, 498, 602);
        let s = psnr_frame(&a, &b).unwrap();
        assert!((s[3] - s[0]).abs() < 1e-12);
    }

    #[test]
    fn weight_contract() {
        let anchor = f64::from(WEIGHT_ANCHOR_CODE) / 1023.0;
        assert!((luma_weight(anchor) - 1.0).abs() < 1e-12);
        let table = luma_weight_table(10);
        assert!(table.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(table[0], WEIGHT_MIN);
        assert_eq!(table[1023], WEIGHT_MAX);
        assert_eq!(luma_weight_table(8)[125], luma_weight_10bit(500.0));
    }

    #[test]
    fn unit_weights_equal_psnr() {
        let i = info(Subsampling::Cs420);
        let a = PlanarFrame::constant(Arc::clone(&i), 400, 500, 600);
        let mut b = a.clone();
        b.y.data[3] = 420;
        b.cb.data[1] = 490;
        let w = wpsnr_frame_with(&a, &b, &|_| 1.0).unwrap();
        let p = psnr_frame(&a, &b).unwrap();
        for k in 0..3 {
            assert!((w[k] - p[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn two_region_weighted_mse_by_hand() {
        // Left half dark (code 200), right half bright (code 950); error 2 everywhere.
        let i = Arc::new(StreamInfo::new(4, 2, 10, Subsampling::Cs444));
        let y = Plane::from_fn(4, 2, |x, _| if x < 2 { 200 } else { 950 });
        let y2 = Plane::from_fn(4, 2, |x, _| if x < 2 { 202 } else { 948 });
        let c = Plane::filled(4, 2, 512);
        let a = PlanarFrame::new(Arc::clone(&i), y, c.clone(), c.clone()).unwrap();
        let b = PlanarFrame::new(i, y2, c.clone(), c).unwrap();
        let w = wpsnr_frame(&a, &b).unwrap();
        // Uniform error: wMSE = 4 regardless of weights.
        let expected = 10.0 * (1023.0f64 * 1023.0 / 4.0).log10();
        assert!((w[0] - expected).abs() < 1e-9);

        // Error only in the bright half: wMSE = 4·(4·w_b)/(4·w_d + 4·w_b).
        let y3 = Plane::from_fn(4, 2, |x, _| if x < 2 { 200 } else { 948 });
        let b3 = PlanarFrame::new(Arc::clone(&a.info), y3, a.cb.clone(), a.cr.clone()).unwrap();
        let (wd, wb) = (0.5, 4.0);
        let wmse = (4.0 * wb * 4.0) / (4.0 * wd + 4.0 * wb);
        let w3 = wpsnr_frame(&a, &b3).unwrap();
        assert!((w3[0] - 10.0 * (1023.0f64 * 1023.0 / wmse).log10()).abs() < 1e-9);
        let p3 = psnr_frame(&a, &b3).unwrap();
        assert!(w3[0] < p3[0]);
    }
}
