use hdrrdo::rd::{bd_rate, overlap_range, read_csv, write_csv, Pchip, RdCurve, RdError, RdPoint};
use proptest::prelude::*;

fn curve(config: &str, metric: &str, pts: &[(f64, f64)]) -> RdCurve {
    let points = pts
        .iter()
        .enumerate()
        .map(|(i, &(r, q))| RdPoint::new(r, q, 27 + 9 * i as u8).unwrap())
        .collect();
    RdCurve::new("clip", config, metric, points).unwrap()
}

/// Five operating points with rate and quality both increasing.
fn curve_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
    (
        30.0..35.0f64,
        prop::array::uniform4(2.0..4.0f64),
        1e5..1e6f64,
        prop::array::uniform4(1.2..2.5f64),
    )
        .prop_map(|(q0, dq, r0, dr)| {
            let mut pts = vec![(r0, q0)];
            for i in 0..4 {
                let (r, q) = pts[i];
                pts.push((r * dr[i], q + dq[i]));
            }
            pts
        })
}

fn simpson(
    f: &dyn Fn(f64) -> f64,
    (a, b): (f64, f64),
    (fa, fm, fb): (f64, f64, f64),
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson(f, (a, m), (fa, flm, fm), left, tol / 2.0, depth - 1)
        + simpson(f, (m, b), (fm, frm, fb), right, tol / 2.0, depth - 1)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, (a, b), (fa, fm, fb), whole, 1e-13, 40)
}

fn knots(c: &RdCurve) -> (Vec<f64>, Vec<f64>) {
    c.points().iter().map(|p| (p.quality, p.rate_bps.ln())).unzip()
}

proptest! {
    #[test]
    fn swapping_curves_inverts_the_ratio(a in curve_strategy(), b in curve_strategy()) {
        let (a, b) = (curve("a", "m", &a), curve("b", "m", &b));
        let ab = bd_rate(&a, &b).unwrap().delta;
        let ba = bd_rate(&b, &a).unwrap().delta;
        prop_assert!(((1.0 + ab) * (1.0 + ba) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rate_scaling_is_multiplicative(a in curve_strategy(), b in curve_strategy(), s in 0.2..5.0f64) {
        let (a, b) = (curve("a", "m", &a), curve("b", "m", &b));
        let base = bd_rate(&a, &b).unwrap().delta;
        let both = bd_rate(&a.scaled_rates(s).unwrap(), &b.scaled_rates(s).unwrap()).unwrap().delta;
        prop_assert!((both - base).abs() < 1e-9);
        let test_only = bd_rate(&a, &b.scaled_rates(s).unwrap()).unwrap().delta;
        prop_assert!((test_only - (s * (1.0 + base) - 1.0)).abs() < 1e-9 * s);
    }

    #[test]
    fn quadrature_agrees_with_adaptive_simpson(a in curve_strategy(), b in curve_strategy()) {
        let (ca, cb) = (curve("a", "m", &a), curve("b", "m", &b));
        let r = bd_rate(&ca, &cb).unwrap();
        let (ka, va) = knots(&ca);
        let (kb, vb) = knots(&cb);
        let (pa, pb) = (Pchip::fit(&ka, &va).unwrap(), Pchip::fit(&kb, &vb).unwrap());
        let [lo, hi] = r.overlap;
        let mut cuts: Vec<f64> = ka.iter().chain(&kb).copied().filter(|&q| q > lo && q < hi).collect();
        cuts.push(lo);
        cuts.push(hi);
        cuts.sort_by(f64::total_cmp);
        let diff = |q: f64| pb.eval(q) - pa.eval(q);
        let integral: f64 = cuts.windows(2).map(|w| adaptive_simpson(&diff, w[0], w[1])).sum();
        let mean = integral / (hi - lo);
        prop_assert!((mean - r.mean_log_diff).abs() < 1e-8, "{} vs {}", mean, r.mean_log_diff);
    }

    #[test]
    fn pchip_never_reverses_on_monotone_data(
        dx in prop::collection::vec(0.01..5.0f64, 1..10),
        dy in prop::collection::vec(prop_oneof![Just(0.0), 0.0..10.0f64], 10),
    ) {
        let mut x = vec![0.0];
        let mut y = vec![0.0];
        for (i, d) in dx.iter().enumerate() {
            x.push(x[i] + d);
            y.push(y[i] + dy[i]);
        }
        let p = Pchip::fit(&x, &y).unwrap();
        let (lo, hi) = p.domain();
        let mut prev = p.eval(lo);
        for i in 1..=500 {
            let v = p.eval(lo + (hi - lo) * f64::from(i) / 500.0);
            prop_assert!(v >= prev);
            prev = v;
        }
        for (a, b) in x.iter().zip(&y) {
            prop_assert!((p.eval(*a) - b).abs() < 1e-9);
        }
    }
}

#[test]
fn identical_and_offset_curves() {
    let pts = [
        (1.0e5, 30.0),
        (2.2e5, 33.0),
        (4.1e5, 35.0),
        (9.0e5, 38.5),
        (2.0e6, 41.0),
    ];
    let a = curve("a", "m", &pts);
    assert_eq!(bd_rate(&a, &a).unwrap().delta, 0.0);
    let up = bd_rate(&a, &a.scaled_rates(1.05).unwrap()).unwrap();
    assert!((up.percent() - 5.0).abs() < 1e-7);
    let down = bd_rate(&a, &a.scaled_rates(1.0 / 1.05).unwrap()).unwrap();
    assert!((down.delta - (1.0 / 1.05 - 1.0)).abs() < 1e-12);
}

#[test]
fn disjoint_quality_ranges_have_no_overlap() {
    let a = curve("a", "m", &[(1e5, 30.0), (2e5, 32.0), (4e5, 34.0)]);
    let b = curve("b", "m", &[(1e5, 40.0), (2e5, 42.0), (4e5, 44.0)]);
    assert!(matches!(overlap_range(&a, &b), Err(RdError::NoOverlap { .. })));
    assert!(matches!(bd_rate(&a, &b), Err(RdError::NoOverlap { .. })));
}

#[test]
fn csv_round_trip_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curves.csv");
    let a = curve("k1=1,k2=1", "DE100", &[(1.5e5, 31.25), (3.0e5, 34.5), (7.0e5, 37.0)]);
    let b = curve("k1=1,k2=1", "PSNR-Y", &[(1.5e5, 40.0), (3.0e5, 42.0), (7.0e5, 44.125)]);
    write_csv(&[a.clone(), b.clone()], std::fs::File::create(&path).unwrap()).unwrap();
    let back = read_csv(std::fs::File::open(&path).unwrap(), "clip", "k1=1,k2=1").unwrap();
    assert_eq!(back, vec![a, b]);
}

#[test]
fn bad_points_are_rejected() {
    assert!(RdPoint::new(0.0, 30.0, 27).is_err());
    assert!(RdPoint::new(1e5, f64::NAN, 27).is_err());
    let single = vec![RdPoint::new(1e5, 30.0, 27).unwrap()];
    assert!(matches!(
        RdCurve::new("c", "k", "m", single),
        Err(RdError::TooFewPoints(1))
    ));
}
