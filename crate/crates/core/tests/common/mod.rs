#![allow(dead_code)]

use std::sync::Arc;

use hdrrdo::colour::NormalisationPolicy;
use hdrrdo::media::{ColourTags, PlanarFrame, Plane, StreamInfo, Subsampling};
use hdrrdo::metrics::LabPipeline;
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::TestRunner;

pub fn hdr_info(w: usize, h: usize) -> Arc<StreamInfo> {
    Arc::new(StreamInfo::new(w, h, 10, Subsampling::Cs420).with_colour(ColourTags::BT2020_PQ))
}

/// Smooth 10-bit HDR content with texture in every plane.
pub fn hdr_frame(w: usize, h: usize, phase: usize) -> PlanarFrame {
    let info = hdr_info(w, h);
    let (cw, ch) = info.chroma_dims();
    let y = Plane::from_fn(w, h, |x, yy| (200 + (x * 7 + yy * 3 + phase * 11) % 500) as u16);
    let cb = Plane::from_fn(cw, ch, |x, yy| (470 + (x * 5 + yy + phase) % 80) as u16);
    let cr = Plane::from_fn(cw, ch, |x, yy| (480 + (x + yy * 4 + phase * 3) % 90) as u16);
    PlanarFrame::new(info, y, cb, cr).unwrap()
}

/// Draws one value from `strategy` with a fixed-seed runner.
pub fn sample<S: Strategy>(runner: &mut TestRunner, strategy: S) -> S::Value {
    strategy.new_tree(runner).unwrap().current()
}

/// Adds uniform noise of half-width `amplitude` code values to every plane.
pub fn add_noise(frame: &PlanarFrame, amplitude: i32, runner: &mut TestRunner) -> PlanarFrame {
    let max = i32::from(frame.info.max_sample());
    let mut noisy = |p: &Plane| {
        let data = p
            .data
            .iter()
            .map(|&v| {
                let n = sample(runner, -amplitude..=amplitude);
                (i32::from(v) + n).clamp(0, max) as u16
            })
            .collect();
        Plane::new(p.width, p.height, data)
    };
    let (y, cb, cr) = (noisy(&frame.y), noisy(&frame.cb), noisy(&frame.cr));
    PlanarFrame::new(frame.info.clone(), y, cb, cr).unwrap()
}

/// Reference colours of the chroma-only and luma-only fixtures.
pub const FIXTURE_COLOURS: [(u16, u16, u16); 4] = [(420, 500, 530), (560, 470, 520), (650, 540, 490), (300, 520, 505)];

pub const FIXTURE_SIZE: usize = 32;

fn uniform(y: u16, cb: u16, cr: u16) -> PlanarFrame {
    PlanarFrame::constant(hdr_info(FIXTURE_SIZE, FIXTURE_SIZE), y, cb, cr)
}

/// Uniform frames, one per [`FIXTURE_COLOURS`] entry.
pub fn fixture_reference() -> Vec<PlanarFrame> {
    FIXTURE_COLOURS.iter().map(|&(y, cb, cr)| uniform(y, cb, cr)).collect()
}

/// Chroma codes that move `(cb, cr)` by at least `min_shift` codes while
/// L* stays within `5e-4` of the original colour, well inside the PSNRL100
/// cap (mean |ΔL*| ≤ 1e-3).
pub fn same_lightness(y: u16, cb: u16, cr: u16, min_shift: i32) -> (u16, u16) {
    let lab = LabPipeline::for_stream(10, ColourTags::BT2020_PQ, NormalisationPolicy::FACTOR_100).unwrap();
    let target = lab.lab(y, cb, cr).l;
    let mut best = (f64::INFINITY, (cb, cr));
    for dcb in -64i32..=64 {
        for dcr in -64i32..=64 {
            if dcb.abs() + dcr.abs() < min_shift {
                continue;
            }
            let c = ((i32::from(cb) + dcb) as u16, (i32::from(cr) + dcr) as u16);
            let err = (lab.lab(y, c.0, c.1).l - target).abs();
            if err < best.0 {
                best = (err, c);
            }
        }
    }
    assert!(best.0 < 5e-4, "no lightness match for {y},{cb},{cr}: {}", best.0);
    best.1
}

/// Reference frames with chroma moved and CIELAB lightness preserved.
pub fn chroma_only_fixture() -> Vec<PlanarFrame> {
    FIXTURE_COLOURS
        .iter()
        .map(|&(y, cb, cr)| {
            let (cb2, cr2) = same_lightness(y, cb, cr, 24);
            uniform(y, cb2, cr2)
        })
        .collect()
}

/// Reference frames with only the luma plane changed.
pub fn luma_only_fixture() -> Vec<PlanarFrame> {
    FIXTURE_COLOURS
        .iter()
        .map(|&(y, cb, cr)| uniform(y + 6, cb, cr))
        .collect()
}
