//! Electro-optical transfer functions.

use log::warn;

use super::ColourError;

/// Absolute peak luminance of the PQ curve, cd/m².
pub const PQ_PEAK_NITS: f64 = 10000.0;
/// Peak luminance assumed for gamma-coded (SDR) content, cd/m².
pub const SDR_PEAK_NITS: f64 = 100.0;

const M1: f64 = 2610.0 / 16384.0;
const M2: f64 = 2523.0 / 4096.0 * 128.0;
const C1: f64 = 3424.0 / 4096.0;
const C2: f64 = 2413.0 / 4096.0 * 32.0;
const C3: f64 = 2392.0 / 4096.0 * 32.0;

/// SMPTE ST 2084 EOTF: normalised code value to luminance in cd/m².
///
/// Inputs outside `[0, 1]` are clamped (with a warning).
pub fn pq_eotf(code: f64) -> f64 {
    let e = if (0.0..=1.0).contains(&code) {
        code
    } else {
        warn!("PQ code value {code} outside [0, 1], clamped");
        code.clamp(0.0, 1.0)
    };
    PQ_PEAK_NITS * pq_eotf_unit(e)
}

/// PQ EOTF without range checks, normalised so `1.0` maps to `1.0`.
#[inline]
pub(crate) fn pq_eotf_unit(e: f64) -> f64 {
    let p = e.powf(1.0 / M2);
    let num = (p - C1).max(0.0);
    let den = C2 - C3 * p;
    (num / den).powf(1.0 / M1)
}

/// Inverse of [`pq_eotf`]: luminance in cd/m² to normalised code value.
///
/// Negative luminance is a domain error; values above the PQ peak are clamped.
pub fn pq_inverse_eotf(luminance: f64) -> Result<f64, ColourError> {
    if luminance.is_nan() || luminance < 0.0 {
        return Err(ColourError::Domain(format!("luminance {luminance} is negative")));
    }
    let l = if luminance > PQ_PEAK_NITS {
        warn!("luminance {luminance} above PQ peak, clamped");
        PQ_PEAK_NITS
    } else {
        luminance
    };
    Ok(pq_inverse_unit(l / PQ_PEAK_NITS))
}

#[inline]
pub(crate) fn pq_inverse_unit(y: f64) -> f64 {
    // Every code up to c1^m2 decodes to black; zero is the canonical one.
    if y == 0.0 {
        return 0.0;
    }
    let yp = y.powf(M1);
    ((C1 + C2 * yp) / (1.0 + C3 * yp)).powf(M2)
}

/// BT.1886 display EOTF with zero black level: `peak · V^2.4`.
pub fn gamma_eotf(code: f64) -> f64 {
    SDR_PEAK_NITS * code.clamp(0.0, 1.0).powf(2.4)
}
