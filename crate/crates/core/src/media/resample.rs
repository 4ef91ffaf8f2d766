//! Chroma upsampling and Lanczos resampling.

use std::f64::consts::PI;
use std::sync::Arc;

use super::frame::{PlanarFrame, Plane, StreamInfo, Subsampling};

/// Lobes of the resampling kernel.
pub const LANCZOS_LOBES: f64 = 5.0;

/// Upsamples 4:2:0 chroma to 4:4:4.
///
/// Chroma samples are co-sited with even luma positions. Even output
/// positions copy the source sample, odd positions average the two
/// neighbours (four in the diagonal case) with round-half-up. Positions
/// past the last chroma sample repeat it. Luma is untouched and 4:4:4
/// input is returned unchanged.
pub fn upsample_chroma_444(frame: &PlanarFrame) -> PlanarFrame {
    if frame.info.subsampling == Subsampling::Cs444 {
        return frame.clone();
    }
    let mut info = (*frame.info).clone();
    info.subsampling = Subsampling::Cs444;
    let (w, h) = (info.width, info.height);
    PlanarFrame {
        y: frame.y.clone(),
        cb: upsample_plane(&frame.cb, w, h),
        cr: upsample_plane(&frame.cr, w, h),
        info: Arc::new(info),
    }
}

fn upsample_plane(src: &Plane, width: usize, height: usize) -> Plane {
    let last_x = src.width - 1;
    let last_y = src.height - 1;
    Plane::from_fn(width, height, |x, y| {
        let (x0, y0) = (x / 2, y / 2);
        let x1 = if x % 2 == 1 { (x0 + 1).min(last_x) } else { x0 };
        let y1 = if y % 2 == 1 { (y0 + 1).min(last_y) } else { y0 };
        match (x % 2, y % 2) {
            (0, 0) => src.get(x0, y0),
            (_, 0) => ((u32::from(src.get(x0, y0)) + u32::from(src.get(x1, y0)) + 1) >> 1) as u16,
            (0, _) => ((u32::from(src.get(x0, y0)) + u32::from(src.get(x0, y1)) + 1) >> 1) as u16,
            _ => {
                let sum = u32::from(src.get(x0, y0))
                    + u32::from(src.get(x1, y0))
                    + u32::from(src.get(x0, y1))
                    + u32::from(src.get(x1, y1));
                ((sum + 2) >> 2) as u16
            }
        }
    })
}

/// Lanczos window of order `a`: `sinc(x)·sinc(x/a)` on `|x| < a`, zero elsewhere.
pub fn lanczos_kernel(x: f64, a: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    if x.abs() >= a {
        return 0.0;
    }
    let px = PI * x;
    a * px.sin() * (px / a).sin() / (px * px)
}

/// Precomputed taps for one output position along one axis.
struct Taps {
    first: isize,
    weights: Vec<f64>,
}

/// Per-output-position taps for resampling `src_len` samples to `dst_len`.
///
/// Output sample `i` is centred at source coordinate `(i + 0.5)·s − 0.5` with
/// `s = src_len/dst_len`. When shrinking, the kernel is stretched by `s` so it
/// also acts as the anti-alias filter. Weights are normalised to unit sum.
fn axis_taps(src_len: usize, dst_len: usize) -> Vec<Taps> {
    let scale = src_len as f64 / dst_len as f64;
    let stretch = scale.max(1.0);
    let support = LANCZOS_LOBES * stretch;
    (0..dst_len)
        .map(|i| {
            let centre = (i as f64 + 0.5) * scale - 0.5;
            let first = (centre - support).ceil() as isize;
            let last = (centre + support).floor() as isize;
            let mut weights: Vec<f64> = (first..=last)
                .map(|j| lanczos_kernel((j as f64 - centre) / stretch, LANCZOS_LOBES))
                .collect();
            let sum: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= sum);
            Taps { first, weights }
        })
        .collect()
}

fn resample_plane(src: &Plane, dst_w: usize, dst_h: usize, max: u16) -> Plane {
    if (src.width, src.height) == (dst_w, dst_h) {
        return src.clone();
    }
    let clamp_x = |j: isize| j.clamp(0, src.width as isize - 1) as usize;
    let clamp_y = |j: isize| j.clamp(0, src.height as isize - 1) as usize;

    // Horizontal pass into floating point, rows of length dst_w.
    let mut horiz = vec![0f64; dst_w * src.height];
    if src.width == dst_w {
        for (dst, &v) in horiz.iter_mut().zip(&src.data) {
            *dst = f64::from(v);
        }
    } else {
        let taps = axis_taps(src.width, dst_w);
        for y in 0..src.height {
            let row = src.row(y);
            for (x, t) in taps.iter().enumerate() {
                let mut acc = 0.0;
                for (k, w) in t.weights.iter().enumerate() {
                    acc += w * f64::from(row[clamp_x(t.first + k as isize)]);
                }
                horiz[y * dst_w + x] = acc;
            }
        }
    }

    // Vertical pass, then round and clamp.
    let max = f64::from(max);
    let quantise = |v: f64| v.round().clamp(0.0, max) as u16;
    let mut data = vec![0u16; dst_w * dst_h];
    if src.height == dst_h {
        for (dst, &v) in data.iter_mut().zip(&horiz) {
            *dst = quantise(v);
        }
    } else {
        let taps = axis_taps(src.height, dst_h);
        for (y, t) in taps.iter().enumerate() {
            for x in 0..dst_w {
                let mut acc = 0.0;
                for (k, w) in t.weights.iter().enumerate() {
                    acc += w * horiz[clamp_y(t.first + k as isize) * dst_w + x];
                }
                data[y * dst_w + x] = quantise(acc);
            }
        }
    }
    Plane::new(dst_w, dst_h, data)
}

/// Resamples every plane of `frame` with a separable five-lobe Lanczos filter.
///
/// Borders replicate the edge sample. Chroma planes follow the frame's
/// subsampling at the target size. Same-size requests return the input
/// unchanged.
///
/// Panics if a target dimension is zero.
pub fn lanczos5_resample(frame: &PlanarFrame, target_w: usize, target_h: usize) -> PlanarFrame {
    assert!(target_w > 0 && target_h > 0, "target dimensions must be positive");
    let mut info: StreamInfo = (*frame.info).clone();
    info.width = target_w;
    info.height = target_h;
    let (cw, ch) = info.chroma_dims();
    let max = info.max_sample();
    PlanarFrame {
        y: resample_plane(&frame.y, target_w, target_h, max),
        cb: resample_plane(&frame.cb, cw, ch, max),
        cr: resample_plane(&frame.cr, cw, ch, max),
        info: Arc::new(info),
    }
}
