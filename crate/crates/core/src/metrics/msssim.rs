//! Multi-scale structural similarity on the luma plane.
//!
//! Five scales, 11-tap Gaussian window (σ = 1.5) with edge replication,
//! 2×2 box downsampling between scales, K1 = 0.01, K2 = 0.03 and the
//! standard per-scale exponents.

use crate::media::Plane;

use super::MetricError;

pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
/// Smallest luma dimension accepted; the coarsest scale is then 2×2.
pub const MS_SSIM_MIN_DIM: usize = 32;

const RADIUS: usize = 5;
const SIGMA: f64 = 1.5;

fn gaussian_window() -> [f64; 2 * RADIUS + 1] {
    let mut w = [0.0; 2 * RADIUS + 1];
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - RADIUS as f64;
        *v = (-0.5 * d * d / (SIGMA * SIGMA)).exp();
    }
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

struct Image {
    w: usize,
    h: usize,
    px: Vec<f64>,
}

impl Image {
    fn from_plane(p: &Plane) -> Self {
        Image {
            w: p.width,
            h: p.height,
            px: p.data.iter().map(|&v| f64::from(v)).collect(),
        }
    }

    fn map2(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Image {
        Image {
            w: self.w,
            h: self.h,
            px: self.px.iter().zip(&other.px).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Separable Gaussian blur with replicated borders.
    fn blur(&self, k: &[f64]) -> Image {
        let (w, h) = (self.w as isize, self.h as isize);
        let r = RADIUS as isize;
        let mut tmp = vec![0.0; self.px.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (i, kv) in k.iter().enumerate() {
                    let xx = (x + i as isize - r).clamp(0, w - 1);
                    acc += kv * self.px[(y * w + xx) as usize];
                }
                tmp[(y * w + x) as usize] = acc;
            }
        }
        let mut out = vec![0.0; self.px.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (i, kv) in k.iter().enumerate() {
                    let yy = (y + i as isize - r).clamp(0, h - 1);
                    acc += kv * tmp[(yy * w + x) as usize];
                }
                out[(y * w + x) as usize] = acc;
            }
        }
        Image {
            w: self.w,
            h: self.h,
            px: out,
        }
    }

    fn downsample(&self) -> Image {
        let (w, h) = (self.w / 2, self.h / 2);
        let mut px = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let at = |xx: usize, yy: usize| self.px[yy * self.w + xx];
                px.push(
                    0.25 * (at(2 * x, 2 * y) + at(2 * x + 1, 2 * y) + at(2 * x, 2 * y + 1) + at(2 * x + 1, 2 * y + 1)),
                );
            }
        }
        Image { w, h, px }
    }
}

/// Mean luminance and contrast-structure terms at one scale.
fn ssim_terms(a: &Image, b: &Image, k: &[f64], c1: f64, c2: f64) -> (f64, f64) {
    let mu_a = a.blur(k);
    let mu_b = b.blur(k);
    let aa = a.map2(a, |x, y| x * y).blur(k);
    let bb = b.map2(b, |x, y| x * y).blur(k);
    let ab = a.map2(b, |x, y| x * y).blur(k);
    let n = a.px.len() as f64;
    let (mut lum, mut cs) = (0.0, 0.0);
    for i in 0..a.px.len() {
        let (ma, mb) = (mu_a.px[i], mu_b.px[i]);
        let va = aa.px[i] - ma * ma;
        let vb = bb.px[i] - mb * mb;
        let cov = ab.px[i] - ma * mb;
        lum += (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        cs += (2.0 * cov + c2) / (va + vb + c2);
    }
    (lum / n, cs / n)
}

/// MS-SSIM between two luma planes with sample peak `peak`.
///
/// Negative contrast-structure means are clamped to zero before
/// exponentiation.
pub fn ms_ssim_plane(reference: &Plane, test: &Plane, peak: f64) -> Result<f64, MetricError> {
    if reference.dims() != test.dims() {
        return Err(MetricError::DimensionMismatch {
            reference: reference.dims(),
            test: test.dims(),
        });
    }
    if reference.width.min(reference.height) < MS_SSIM_MIN_DIM {
        return Err(MetricError::TooSmall {
            width: reference.width,
            height: reference.height,
            min: MS_SSIM_MIN_DIM,
        });
    }
    let k = gaussian_window();
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let mut a = Image::from_plane(reference);
    let mut b = Image::from_plane(test);
    let mut score = 1.0;
    for (scale, &w) in MS_SSIM_WEIGHTS.iter().enumerate() {
        let (lum, cs) = ssim_terms(&a, &b, &k, c1, c2);
        let cs = cs.max(0.0);
        if scale + 1 < MS_SSIM_WEIGHTS.len() {
            score *= cs.powf(w);
            a = a.downsample();
            b = b.downsample();
        } else {
            score *= (lum * cs).powf(w);
        }
    }
    Ok(score)
}
