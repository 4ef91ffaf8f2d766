//! Y'CbCr → R'G'B' → linear RGB → XYZ → CIELAB.

use serde::{Deserialize, Serialize};

use super::transfer::{gamma_eotf, pq_eotf_unit, PQ_PEAK_NITS};
use super::ColourError;
use crate::media::{MatrixCoefficients, PlanarFrame, Primaries, SampleRange, Subsampling, Transfer};

/// Luma coefficients `(Kr, Kb)` of a Y'CbCr matrix.
pub fn luma_coefficients(matrix: MatrixCoefficients) -> Result<(f64, f64), ColourError> {
    match matrix {
        MatrixCoefficients::Bt709 => Ok((0.2126, 0.0722)),
        MatrixCoefficients::Bt2020Ncl => Ok((0.2627, 0.0593)),
        MatrixCoefficients::Unspecified => Err(ColourError::UnknownMatrix),
    }
}

/// Quantisation parameters mapping integer codes to normalised values:
/// `Y' = (Y − y_offset)/y_scale`, `C = (C − c_offset)/c_scale`.
#[derive(Debug, Clone, Copy)]
struct Quantisation {
    y_offset: f64,
    y_scale: f64,
    c_offset: f64,
    c_scale: f64,
    max: f64,
}

impl Quantisation {
    fn new(bit_depth: u8, range: SampleRange) -> Self {
        let max = f64::from((1u32 << bit_depth) - 1);
        match range {
            SampleRange::Limited => {
                let unit = f64::from(1u32 << (bit_depth - 8));
                Quantisation {
                    y_offset: 16.0 * unit,
                    y_scale: 219.0 * unit,
                    c_offset: 128.0 * unit,
                    c_scale: 224.0 * unit,
                    max,
                }
            }
            SampleRange::Full => Quantisation {
                y_offset: 0.0,
                y_scale: max,
                c_offset: f64::from(1u32 << (bit_depth - 1)),
                c_scale: max,
                max,
            },
        }
    }
}

/// Per-pixel Y'CbCr → R'G'B' converter for one stream format.
#[derive(Debug, Clone, Copy)]
pub struct YcbcrDecoder {
    q: Quantisation,
    kr: f64,
    kb: f64,
}

impl YcbcrDecoder {
    pub fn new(bit_depth: u8, range: SampleRange, matrix: MatrixCoefficients) -> Result<Self, ColourError> {
        let (kr, kb) = luma_coefficients(matrix)?;
        Ok(YcbcrDecoder {
            q: Quantisation::new(bit_depth, range),
            kr,
            kb,
        })
    }

    /// Non-linear R'G'B' in `[0, 1]`.
    #[inline]
    pub fn decode(&self, y: u16, cb: u16, cr: u16) -> [f64; 3] {
        let q = &self.q;
        let yn = (f64::from(y) - q.y_offset) / q.y_scale;
        let pb = (f64::from(cb) - q.c_offset) / q.c_scale;
        let pr = (f64::from(cr) - q.c_offset) / q.c_scale;
        let kg = 1.0 - self.kr - self.kb;
        let r = yn + 2.0 * (1.0 - self.kr) * pr;
        let b = yn + 2.0 * (1.0 - self.kb) * pb;
        let g = (yn - self.kr * r - self.kb * b) / kg;
        [r.clamp(0.0, 1.0), g.clamp(0.0, 1.0), b.clamp(0.0, 1.0)]
    }

    /// R'G'B' → integer Y'CbCr codes (rounded, clamped to the code range).
    #[inline]
    pub fn encode(&self, rgb: [f64; 3]) -> [u16; 3] {
        let q = &self.q;
        let [r, g, b] = rgb;
        let kg = 1.0 - self.kr - self.kb;
        let yn = self.kr * r + kg * g + self.kb * b;
        let pb = (b - yn) / (2.0 * (1.0 - self.kb));
        let pr = (r - yn) / (2.0 * (1.0 - self.kr));
        let code = |v: f64| v.round().clamp(0.0, q.max) as u16;
        [
            code(yn * q.y_scale + q.y_offset),
            code(pb * q.c_scale + q.c_offset),
            code(pr * q.c_scale + q.c_offset),
        ]
    }
}

/// Non-linear R'G'B' picture with components in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbFrame {
    pub width: usize,
    pub height: usize,
    pub r: Vec<f64>,
    pub g: Vec<f64>,
    pub b: Vec<f64>,
}

/// Linear-light RGB picture, components in cd/m².
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRgbFrame {
    pub width: usize,
    pub height: usize,
    pub r: Vec<f64>,
    pub g: Vec<f64>,
    pub b: Vec<f64>,
    pub primaries: Primaries,
}

/// Converts a 4:4:4 frame to non-linear R'G'B' using its matrix tag.
pub fn ycbcr_to_rgb(frame: &PlanarFrame, range: SampleRange) -> Result<RgbFrame, ColourError> {
    if frame.info.subsampling != Subsampling::Cs444 {
        return Err(ColourError::NotFullResolution);
    }
    let decoder = YcbcrDecoder::new(frame.info.bit_depth, range, frame.info.colour.matrix)?;
    let n = frame.y.data.len();
    let mut out = RgbFrame {
        width: frame.info.width,
        height: frame.info.height,
        r: Vec::with_capacity(n),
        g: Vec::with_capacity(n),
        b: Vec::with_capacity(n),
    };
    for i in 0..n {
        let [r, g, b] = decoder.decode(frame.y.data[i], frame.cb.data[i], frame.cr.data[i]);
        out.r.push(r);
        out.g.push(g);
        out.b.push(b);
    }
    Ok(out)
}

/// Applies the display EOTF for `transfer`, producing cd/m².
pub fn eotf(code: f64, transfer: Transfer) -> Result<f64, ColourError> {
    match transfer {
        Transfer::Pq => Ok(PQ_PEAK_NITS * pq_eotf_unit(code.clamp(0.0, 1.0))),
        Transfer::Gamma => Ok(gamma_eotf(code)),
        Transfer::Unspecified => Err(ColourError::UnknownTransfer),
    }
}

/// Linearises an R'G'B' frame.
pub fn rgb_to_linear(rgb: &RgbFrame, transfer: Transfer, primaries: Primaries) -> Result<LinearRgbFrame, ColourError> {
    let lin = |v: &[f64]| v.iter().map(|&c| eotf(c, transfer)).collect::<Result<Vec<_>, _>>();
    Ok(LinearRgbFrame {
        width: rgb.width,
        height: rgb.height,
        r: lin(&rgb.r)?,
        g: lin(&rgb.g)?,
        b: lin(&rgb.b)?,
        primaries,
    })
}

/// CIE 1931 XYZ tristimulus values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Xyz {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Xyz {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Xyz { x, y, z }
    }

    pub fn scaled(self, k: f64) -> Self {
        Xyz::new(self.x * k, self.y * k, self.z * k)
    }

    /// XYZ of a chromaticity `(x, y)` with unit luminance.
    pub fn from_chromaticity(x: f64, y: f64) -> Self {
        Xyz::new(x / y, 1.0, (1.0 - x - y) / y)
    }
}

/// D65 white chromaticity.
pub const D65_CHROMATICITY: (f64, f64) = (0.3127, 0.3290);

/// Unit-luminance D65 white.
pub fn d65() -> Xyz {
    Xyz::from_chromaticity(D65_CHROMATICITY.0, D65_CHROMATICITY.1)
}

fn primaries_chromaticities(p: Primaries) -> Result<[(f64, f64); 3], ColourError> {
    match p {
        Primaries::Bt709 => Ok([(0.640, 0.330), (0.300, 0.600), (0.150, 0.060)]),
        Primaries::Bt2020 => Ok([(0.708, 0.292), (0.170, 0.797), (0.131, 0.046)]),
        Primaries::Unspecified => Err(ColourError::UnknownPrimaries),
    }
}

type Mat3 = [[f64; 3]; 3];

fn invert3(m: &Mat3) -> Mat3 {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let inv_det = 1.0 / det;
    let c = |r0: usize, c0: usize, r1: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    [
        [
            c(1, 1, 2, 2) * inv_det,
            -c(0, 1, 2, 2) * inv_det,
            c(0, 1, 1, 2) * inv_det,
        ],
        [
            -c(1, 0, 2, 2) * inv_det,
            c(0, 0, 2, 2) * inv_det,
            -c(0, 0, 1, 2) * inv_det,
        ],
        [
            c(1, 0, 2, 1) * inv_det,
            -c(0, 0, 2, 1) * inv_det,
            c(0, 0, 1, 1) * inv_det,
        ],
    ]
}

/// RGB → XYZ matrix for `primaries` with a D65 white, normalised so that
/// RGB `(1, 1, 1)` has `Y = 1`.
pub fn rgb_to_xyz_matrix(primaries: Primaries) -> Result<Mat3, ColourError> {
    let chroma = primaries_chromaticities(primaries)?;
    let cols: Vec<Xyz> = chroma.iter().map(|&(x, y)| Xyz::from_chromaticity(x, y)).collect();
    let p: Mat3 = [
        [cols[0].x, cols[1].x, cols[2].x],
        [cols[0].y, cols[1].y, cols[2].y],
        [cols[0].z, cols[1].z, cols[2].z],
    ];
    let w = d65();
    let inv = invert3(&p);
    let s = [
        inv[0][0] * w.x + inv[0][1] * w.y + inv[0][2] * w.z,
        inv[1][0] * w.x + inv[1][1] * w.y + inv[1][2] * w.z,
        inv[2][0] * w.x + inv[2][1] * w.y + inv[2][2] * w.z,
    ];
    let mut m = p;
    for row in m.iter_mut() {
        for (v, si) in row.iter_mut().zip(s) {
            *v *= si;
        }
    }
    Ok(m)
}

#[inline]
pub(crate) fn apply(m: &Mat3, rgb: [f64; 3]) -> Xyz {
    Xyz::new(
        m[0][0] * rgb[0] + m[0][1] * rgb[1] + m[0][2] * rgb[2],
        m[1][0] * rgb[0] + m[1][1] * rgb[1] + m[1][2] * rgb[2],
        m[2][0] * rgb[0] + m[2][1] * rgb[1] + m[2][2] * rgb[2],
    )
}

/// Linear RGB to XYZ (D65) for the given primaries.
pub fn rgb_to_xyz(rgb: [f64; 3], primaries: Primaries) -> Result<Xyz, ColourError> {
    Ok(apply(&rgb_to_xyz_matrix(primaries)?, rgb))
}

/// Scaling applied before the L* law.
///
/// XYZ values are divided by the luminance of the reference white (the
/// display peak) and multiplied by `factor`, so the reference white lands on
/// `Y = factor` and lightness on the usual 0–100 scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalisationPolicy {
    pub factor: f64,
}

impl NormalisationPolicy {
    pub const FACTOR_100: NormalisationPolicy = NormalisationPolicy { factor: 100.0 };
}

impl Default for NormalisationPolicy {
    fn default() -> Self {
        Self::FACTOR_100
    }
}

/// A CIELAB colour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabColour {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl LabColour {
    pub const fn new(l: f64, a: f64, b: f64) -> Self {
        LabColour { l, a, b }
    }

    pub fn chroma(&self) -> f64 {
        self.a.hypot(self.b)
    }

    /// Hue angle in degrees, `[0, 360)`.
    pub fn hue(&self) -> f64 {
        let h = self.b.atan2(self.a).to_degrees();
        if h < 0.0 {
            h + 360.0
        } else {
            h
        }
    }
}

#[inline]
fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// XYZ to CIELAB relative to `white` (same absolute units as `xyz`).
pub fn xyz_to_lab(xyz: Xyz, white: Xyz, policy: NormalisationPolicy) -> Result<LabColour, ColourError> {
    if xyz.x < 0.0 || xyz.y < 0.0 || xyz.z < 0.0 || xyz.x.is_nan() {
        return Err(ColourError::Domain(format!("negative XYZ {xyz:?}")));
    }
    Ok(xyz_to_lab_unchecked(xyz, white, policy))
}

#[inline]
pub(crate) fn xyz_to_lab_unchecked(xyz: Xyz, white: Xyz, policy: NormalisationPolicy) -> LabColour {
    let k = policy.factor / white.y;
    let (xn, yn, zn) = (white.x * k, white.y * k, white.z * k);
    let fx = lab_f(xyz.x * k / xn);
    let fy = lab_f(xyz.y * k / yn);
    let fz = lab_f(xyz.z * k / zn);
    LabColour {
        l: 116.0 * fy - 16.0,
        a: 500.0 * (fx - fy),
        b: 200.0 * (fy - fz),
    }
}
