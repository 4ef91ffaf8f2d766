use std::cell::Cell;

use hdrrdo::harness::{ChromaOffsetPolicy, EncodeSettings, Harness, MockClip};
use hdrrdo::optimizer::{
    bd_rate_or_penalty, line_minimize, minimize, offset_cost, offset_search_default, optimize_lambda, optimize_offsets,
    powell_minimize_with_replay, Convergence, LambdaProblem, OffsetProblem, SearchOptions, DEFAULT_PENALTY,
};
use hdrrdo::rd::{RdCurve, RdPoint, DEFAULT_QPS};

fn problem<'h>(h: &'h Harness, clip: &str, metric: &str) -> LambdaProblem<'h> {
    LambdaProblem {
        harness: h,
        clip: clip.into(),
        metric: metric.into(),
        qps: DEFAULT_QPS.to_vec(),
        settings: EncodeSettings::default(),
        penalty: DEFAULT_PENALTY,
    }
}

#[test]
fn recovers_each_metric_optimum_on_every_clip() {
    let h = Harness::mock();
    for id in MockClip::BUILTIN_IDS {
        let clip = MockClip::builtin(id).unwrap();
        for metric in ["DE100", "PSNRL100", "wPSNR-AVG"] {
            let out = optimize_lambda(&problem(&h, id, metric), &SearchOptions::lambda_default(), &[]).unwrap();
            let (w1, w2) = clip.optimum_for(metric);
            assert!(
                (out.best_k.0 - w1).abs() < 0.05 && (out.best_k.1 - w2).abs() < 0.05,
                "{id}/{metric}: {:?} vs ({w1}, {w2})",
                out.best_k
            );
            assert!(out.trace.evaluations <= 100);
            assert!(out.best_bd_rate < 0.0);
            assert!((out.best_bd_rate - clip.closed_form_bd_rate(metric, out.best_k)).abs() < 1e-6);
        }
    }
}

#[test]
fn encode_tally_counts_five_per_evaluation() {
    let h = Harness::mock();
    let out = optimize_lambda(&problem(&h, "mock-b", "DE100"), &SearchOptions::lambda_default(), &[]).unwrap();
    let t = &out.trace;
    assert_eq!(t.encodes, 5 * (t.evaluations as u64 + 1));
    assert_eq!(t.entries.len(), t.evaluations);
    // Every distinct point is encoded once; the anchor is among them.
    assert_eq!(t.encoder_invocations, h.invocations());
    assert!(t.encoder_invocations <= t.encodes);
    let again = optimize_lambda(&problem(&h, "mock-b", "DE100"), &SearchOptions::lambda_default(), &[]).unwrap();
    assert_eq!(again.trace.encoder_invocations, 0);
    assert_eq!(again.best_k, out.best_k);
}

#[test]
fn evaluation_budget_is_respected() {
    let h = Harness::mock();
    let opts = SearchOptions {
        max_evaluations: 9,
        ..SearchOptions::lambda_default()
    };
    let out = optimize_lambda(&problem(&h, "mock-a", "DE100"), &opts, &[]).unwrap();
    assert!(out.trace.evaluations <= 9);
    assert_eq!(out.trace.reason, Convergence::MaxIter);
    assert!(out.best_bd_rate <= 0.0);
}

#[test]
fn replayed_trace_needs_no_new_evaluations() {
    let h = Harness::mock();
    let opts = SearchOptions::lambda_default();
    let first = optimize_lambda(&problem(&h, "mock-c", "PSNRL100"), &opts, &[]).unwrap();
    let lines = first.trace.to_json_lines();
    let replay = hdrrdo::optimizer::OptimizationTrace::entries_from_json_lines(&lines).unwrap();
    let calls = Cell::new(0);
    let mut cost = |_: &[f64]| {
        calls.set(calls.get() + 1);
        Err::<f64, String>("replay should cover every point".into())
    };
    let again = powell_minimize_with_replay(&mut cost, &opts, &replay).unwrap();
    assert_eq!(calls.get(), 0);
    assert_eq!(again.best_point, first.trace.best_point);
    assert_eq!(again.entries, first.trace.entries);
}

#[test]
fn log_space_search_matches_substituted_linear_search() {
    let f = |k: &[f64]| (k[0].ln() - 0.3).powi(2) + 2.0 * (k[1].ln() + 0.2).powi(2) + 0.1 * k[0].ln() * k[1].ln();
    let log = minimize(f, &SearchOptions::lambda_default());
    let lin_opts = SearchOptions {
        start: vec![0.0, 0.0],
        log_space: false,
        ..SearchOptions::lambda_default()
    };
    let lin = minimize(|u: &[f64]| f(&[u[0].exp(), u[1].exp()]), &lin_opts);
    assert_eq!(log.evaluations, lin.evaluations);
    assert!((log.best_cost - lin.best_cost).abs() < 1e-12);
    for (a, u) in log.best_point.iter().zip(&lin.best_point) {
        assert!((a.ln() - u).abs() < 1e-9);
    }
}

#[test]
fn penalty_region_does_not_derail_the_search() {
    // Infeasible (penalised) beyond k1 = 2, minimum at (1.5, 1.2).
    let f = |k: &[f64]| {
        if k[0] > 2.0 {
            DEFAULT_PENALTY
        } else {
            (k[0].ln() - 1.5f64.ln()).powi(2) + (k[1].ln() - 1.2f64.ln()).powi(2) - 0.2
        }
    };
    let t = minimize(f, &SearchOptions::lambda_default());
    assert!(
        (t.best_point[0] - 1.5).abs() < 0.05 && (t.best_point[1] - 1.2).abs() < 0.05,
        "{:?}",
        t.best_point
    );
    assert!(t.entries.iter().all(|e| e.cost <= DEFAULT_PENALTY));
}

#[test]
fn no_overlap_costs_the_penalty() {
    let c = |cfg: &str, q0: f64| {
        let pts = (0..3)
            .map(|i| RdPoint::new(1e5 * f64::from(i + 1), q0 + f64::from(i), 27).unwrap())
            .collect();
        RdCurve::new("c", cfg, "m", pts).unwrap()
    };
    assert_eq!(bd_rate_or_penalty(&c("a", 30.0), &c("b", 40.0), 0.75).unwrap(), 0.75);
    assert!(bd_rate_or_penalty(&c("a", 30.0), &c("b", 31.0), 0.75).unwrap() < 0.75);
}

#[test]
fn line_search_on_a_parabola() {
    let t = line_minimize(
        |p: &[f64]| (p[0] - 2.0).powi(2) + (p[1] - 1.0).powi(2),
        &[0.0, 0.0],
        &[2.0, 1.0],
        1e-6,
        None,
    );
    assert!((t - 1.0).abs() < 1e-4, "{t}");
    let bounded = line_minimize(|p: &[f64]| -p[0], &[0.0], &[1.0], 1e-6, Some(&[(-1.0, 0.25)]));
    assert!((bounded - 0.25).abs() < 1e-4, "{bounded}");
}

#[test]
fn offset_search_does_not_lose_to_the_default_policy() {
    let h = Harness::mock();
    let clips: Vec<String> = MockClip::BUILTIN_IDS.iter().map(|s| s.to_string()).collect();
    let d = ChromaOffsetPolicy::default();
    let start = offset_cost(&h, &clips, (d.k_offset, d.l_offset), &DEFAULT_QPS, "mock").unwrap();
    let planted = offset_cost(&h, &clips, (-0.49, 9.26), &DEFAULT_QPS, "mock").unwrap();
    assert!(planted <= start);
    let problem = OffsetProblem {
        harness: &h,
        clips,
        qps: DEFAULT_QPS.to_vec(),
        adapter: "mock".into(),
        c: 1.0,
        penalty: DEFAULT_PENALTY,
    };
    let out = optimize_offsets(&problem, &offset_search_default()).unwrap();
    assert!(out.best_cost <= start);
    assert!(out.best_cost <= planted + 1e-4);
    assert!(out.trace.evaluations <= 100);
}
