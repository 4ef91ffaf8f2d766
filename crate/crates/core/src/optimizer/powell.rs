//! Powell's conjugate-direction search with a doubling bracket and
//! golden-section line minimisation.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

const INV_PHI: f64 = 0.618_033_988_749_894_9;
const GOLD: f64 = 1.0 - INV_PHI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Start point in the caller's coordinates.
    pub start: Vec<f64>,
    /// Initial trial step per axis, in search coordinates.
    pub step: Vec<f64>,
    /// Stop when a full cycle improves the cost by less than this.
    pub tolerance: f64,
    /// Line searches stop once the bracket is narrower than this
    /// (search coordinates).
    pub x_tolerance: f64,
    /// Maximum number of Powell cycles.
    pub max_iterations: usize,
    /// Maximum number of cost evaluations.
    pub max_evaluations: usize,
    /// Search over `ln x` instead of `x`; every coordinate must be positive.
    pub log_space: bool,
    /// Optional box in search coordinates.
    pub bounds: Option<Vec<(f64, f64)>>,
    /// Cost assigned to infeasible evaluations by cost functions.
    pub penalty: f64,
}

impl SearchOptions {
    /// Defaults for `(k₁, k₂)` tuning: start `(1, 1)`, log-space search.
    pub fn lambda_default() -> Self {
        SearchOptions {
            start: vec![1.0, 1.0],
            step: vec![0.5, 0.5],
            tolerance: 5e-4,
            x_tolerance: 0.02,
            max_iterations: 20,
            max_evaluations: 100,
            log_space: true,
            bounds: Some(vec![(-3.0, 3.0), (-3.0, 3.0)]),
            penalty: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.start.is_empty() || self.start.len() != self.step.len() {
            return Err("start and step must be non-empty and of equal length".into());
        }
        if !(self.tolerance > 0.0 && self.x_tolerance > 0.0) {
            return Err("tolerances must be positive".into());
        }
        if self.max_iterations == 0 || self.max_evaluations == 0 {
            return Err("iteration and evaluation limits must be at least 1".into());
        }
        if self.step.iter().any(|s| *s == 0.0 || !s.is_finite()) {
            return Err("steps must be non-zero".into());
        }
        if self.log_space && self.start.iter().any(|v| *v <= 0.0) {
            return Err("log-space search needs a positive start point".into());
        }
        if let Some(b) = &self.bounds {
            if b.len() != self.start.len() || b.iter().any(|(lo, hi)| lo >= hi) {
                return Err("bounds must match the dimension and be non-empty".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convergence {
    /// A cycle improved the cost by less than the tolerance.
    Tolerance,
    /// Cycle or evaluation budget exhausted.
    MaxIter,
    /// The cost kept improving while the point no longer moved.
    Stall,
}

/// One cost evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub index: usize,
    pub cycle: usize,
    /// Point in the caller's coordinates.
    pub point: Vec<f64>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub entries: Vec<TraceEntry>,
    pub best_point: Vec<f64>,
    pub best_cost: f64,
    pub reason: Convergence,
    pub evaluations: usize,
    pub cycles: usize,
    /// Encodes implied by the evaluations (filled in by cost wrappers).
    pub encodes: u64,
    /// Encoder invocations actually made (cache misses).
    pub encoder_invocations: u64,
}

impl OptimizationTrace {
    /// One JSON object per evaluation.
    pub fn to_json_lines(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("trace entry serialises") + "\n")
            .collect()
    }

    /// Parses the output of [`to_json_lines`](Self::to_json_lines).
    pub fn entries_from_json_lines(text: &str) -> Result<Vec<TraceEntry>, serde_json::Error> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect()
    }
}

struct Budgeted<'a, E> {
    cost: &'a mut dyn FnMut(&[f64]) -> Result<f64, E>,
    log_space: bool,
    max_evaluations: usize,
    memo: HashMap<Vec<u64>, f64>,
    replay: HashMap<Vec<u64>, f64>,
    entries: Vec<TraceEntry>,
    cycle: usize,
    best: Option<(Vec<f64>, f64)>,
}

fn key(point: &[f64]) -> Vec<u64> {
    point.iter().map(|v| v.to_bits()).collect()
}

impl<E> Budgeted<'_, E> {
    fn to_user(&self, u: &[f64]) -> Vec<f64> {
        if self.log_space {
            u.iter().map(|v| v.exp()).collect()
        } else {
            u.to_vec()
        }
    }

    fn exhausted(&self) -> bool {
        self.entries.len() >= self.max_evaluations
    }

    /// Cost at search-space point `u`; `None` once the budget is spent.
    fn eval(&mut self, u: &[f64]) -> Result<Option<f64>, E> {
        let point = self.to_user(u);
        let k = key(&point);
        if let Some(&c) = self.memo.get(&k) {
            return Ok(Some(c));
        }
        if self.exhausted() {
            return Ok(None);
        }
        let c = match self.replay.get(&k) {
            Some(&c) => c,
            None => (self.cost)(&point)?,
        };
        let c = if c.is_nan() { f64::INFINITY } else { c };
        self.memo.insert(k, c);
        if self.best.as_ref().is_none_or(|(_, b)| c < *b) {
            self.best = Some((point.clone(), c));
        }
        self.entries.push(TraceEntry {
            index: self.entries.len(),
            cycle: self.cycle,
            point,
            cost: c,
        });
        Ok(Some(c))
    }
}

fn along(origin: &[f64], dir: &[f64], t: f64) -> Vec<f64> {
    origin.iter().zip(dir).map(|(o, d)| o + t * d).collect()
}

/// Range of `t` keeping `origin + t·dir` inside `bounds`.
fn t_range(origin: &[f64], dir: &[f64], bounds: Option<&[(f64, f64)]>) -> (f64, f64) {
    let Some(bounds) = bounds else {
        return (f64::NEG_INFINITY, f64::INFINITY);
    };
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for ((o, d), (b0, b1)) in origin.iter().zip(dir).zip(bounds) {
        if *d == 0.0 {
            continue;
        }
        let (a, b) = ((b0 - o) / d, (b1 - o) / d);
        lo = lo.max(a.min(b));
        hi = hi.min(a.max(b));
    }
    (lo.min(0.0), hi.max(0.0))
}

struct LineResult {
    t: f64,
    cost: f64,
    /// Final bracket width in `t` units.
    width: f64,
}

type LineFn<'a, E> = dyn FnMut(f64) -> Result<Option<f64>, E> + 'a;

/// Evaluates `f(t)` and tracks the best point; ties keep the earlier one.
fn probe<E>(f: &mut LineFn<'_, E>, t: f64, best: &mut (f64, f64)) -> Result<Option<f64>, E> {
    let r = f(t)?;
    if let Some(c) = r {
        if c < best.1 {
            *best = (t, c);
        }
    }
    Ok(r)
}

fn finish(best: (f64, f64), width: f64) -> LineResult {
    LineResult {
        t: best.0,
        cost: best.1,
        width,
    }
}

/// Minimises `f(t)` from `t = 0` (cost `f0`) with trial step `step`,
/// returning the best `t` seen.
fn line_search<E>(
    f: &mut LineFn<'_, E>,
    f0: f64,
    step: f64,
    t_tol: f64,
    (t_lo, t_hi): (f64, f64),
) -> Result<LineResult, E> {
    let mut best = (0.0, f0);

    // Pick the downhill side.
    let mut t1 = step.min(t_hi);
    let mut f1 = f64::INFINITY;
    if t1 > 0.0 {
        match probe(f, t1, &mut best)? {
            Some(c) => f1 = c,
            None => return Ok(finish(best, 0.0)),
        }
    }
    if f1 >= f0 {
        let tn = (-step).max(t_lo);
        let mut fm = f64::INFINITY;
        if tn < 0.0 {
            match probe(f, tn, &mut best)? {
                Some(c) => fm = c,
                None => return Ok(finish(best, 0.0)),
            }
        }
        if fm >= f0 {
            if tn == 0.0 || t1 == 0.0 {
                return Ok(finish(best, 0.0));
            }
            return golden(f, &mut best, tn, (0.0, f0), t1, t_tol);
        }
        t1 = tn;
        f1 = fm;
    }

    // Double until the cost rises or the bound is reached.
    let limit = if t1 > 0.0 { t_hi } else { t_lo };
    let (mut a, mut b) = (0.0, (t1, f1));
    loop {
        if b.0 == limit {
            return Ok(finish(best, (b.0 - a).abs()));
        }
        let mut tc = 2.0 * b.0;
        if (t1 > 0.0 && tc > limit) || (t1 < 0.0 && tc < limit) {
            tc = limit;
        }
        let Some(fc) = probe(f, tc, &mut best)? else {
            return Ok(finish(best, (b.0 - a).abs()));
        };
        if fc >= b.1 {
            return golden(f, &mut best, a, b, tc, t_tol);
        }
        a = b.0;
        b = (tc, fc);
    }
}

/// Golden-section reduction of the bracket with ends `a`, `c` and lowest
/// interior point `b`, which is reused.
fn golden<E>(
    f: &mut LineFn<'_, E>,
    best: &mut (f64, f64),
    a: f64,
    b: (f64, f64),
    c: f64,
    t_tol: f64,
) -> Result<LineResult, E> {
    let (mut lo, mut mid, mut hi) = (a.min(c), b, a.max(c));
    while hi - lo > t_tol {
        let (x, left) = if mid.0 - lo > hi - mid.0 {
            (mid.0 - GOLD * (mid.0 - lo), true)
        } else {
            (mid.0 + GOLD * (hi - mid.0), false)
        };
        let Some(fx) = probe(f, x, best)? else { break };
        if fx < mid.1 {
            if left {
                hi = mid.0;
            } else {
                lo = mid.0;
            }
            mid = (x, fx);
        } else if left {
            lo = x;
        } else {
            hi = x;
        }
    }
    Ok(finish(*best, hi - lo))
}

/// Minimises a fallible cost with Powell's method.
///
/// Costs are memoised per point, so revisits do not count against the
/// budget. `replay` supplies costs from an earlier trace; matching points
/// are recorded without calling `cost`.
pub fn powell_minimize_with_replay<E>(
    cost: &mut dyn FnMut(&[f64]) -> Result<f64, E>,
    opts: &SearchOptions,
    replay: &[TraceEntry],
) -> Result<OptimizationTrace, E> {
    opts.validate()
        .unwrap_or_else(|e| panic!("invalid search options: {e}"));
    let n = opts.start.len();
    let mut ev = Budgeted {
        cost,
        log_space: opts.log_space,
        max_evaluations: opts.max_evaluations,
        memo: HashMap::new(),
        replay: replay.iter().map(|e| (key(&e.point), e.cost)).collect(),
        entries: Vec::new(),
        cycle: 0,
        best: None,
    };
    let mut x: Vec<f64> = if opts.log_space {
        opts.start.iter().map(|v| v.ln()).collect()
    } else {
        opts.start.clone()
    };
    if let Some(b) = &opts.bounds {
        for (v, (lo, hi)) in x.iter_mut().zip(b) {
            *v = v.clamp(*lo, *hi);
        }
    }
    let mut fx = ev.eval(&x)?.expect("budget of at least one evaluation");
    let mut dirs: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { opts.step[i] } else { 0.0 }).collect())
        .collect();
    // Trial step per direction, in units of the direction vector.
    let mut trial = vec![1.0; n];
    let bounds = opts.bounds.as_deref();
    let mut reason = Convergence::MaxIter;
    let mut cycles = 0;

    'outer: for cycle in 1..=opts.max_iterations {
        ev.cycle = cycle;
        cycles = cycle;
        let (x0, f0) = (x.clone(), fx);
        let (mut big_drop, mut big_i) = (0.0, 0);
        for i in 0..n {
            let d = dirs[i].clone();
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            let origin = x.clone();
            let range = t_range(&origin, &d, bounds);
            let mut f1d = |t: f64| ev.eval(&along(&origin, &d, t));
            let r = line_search(&mut f1d, fx, trial[i], opts.x_tolerance / norm, range)?;
            if fx - r.cost > big_drop {
                big_drop = fx - r.cost;
                big_i = i;
            }
            x = along(&origin, &d, r.t);
            fx = r.cost;
            trial[i] = (2.0 * r.width).clamp(4.0 * opts.x_tolerance / norm, 1.0);
            if ev.exhausted() {
                break 'outer;
            }
        }
        let disp: Vec<f64> = x.iter().zip(&x0).map(|(a, b)| a - b).collect();
        let disp_norm = disp.iter().map(|v| v * v).sum::<f64>().sqrt();
        if f0 - fx < opts.tolerance {
            reason = Convergence::Tolerance;
            break;
        }
        if disp_norm < opts.x_tolerance * 1e-3 {
            reason = Convergence::Stall;
            break;
        }
        // Line search along the cycle displacement, which then replaces
        // the direction of largest decrease.
        let origin = x.clone();
        let range = t_range(&origin, &disp, bounds);
        let mut f1d = |t: f64| ev.eval(&along(&origin, &disp, t));
        let r = line_search(&mut f1d, fx, 1.0, opts.x_tolerance / disp_norm, range)?;
        x = along(&origin, &disp, r.t);
        fx = r.cost;
        dirs.remove(big_i);
        trial.remove(big_i);
        dirs.push(disp);
        trial.push((2.0 * r.width).clamp(4.0 * opts.x_tolerance / disp_norm, 1.0));
        if ev.exhausted() {
            break;
        }
    }

    let (best_point, best_cost) = ev.best.clone().expect("at least one evaluation");
    Ok(OptimizationTrace {
        evaluations: ev.entries.len(),
        entries: ev.entries,
        best_point,
        best_cost,
        reason,
        cycles,
        encodes: 0,
        encoder_invocations: 0,
    })
}

/// Minimises a fallible cost with Powell's method.
pub fn powell_minimize<E>(
    cost: &mut dyn FnMut(&[f64]) -> Result<f64, E>,
    opts: &SearchOptions,
) -> Result<OptimizationTrace, E> {
    powell_minimize_with_replay(cost, opts, &[])
}

/// Minimises an infallible cost.
pub fn minimize(mut cost: impl FnMut(&[f64]) -> f64, opts: &SearchOptions) -> OptimizationTrace {
    let mut wrapped = |p: &[f64]| Ok::<f64, std::convert::Infallible>(cost(p));
    match powell_minimize(&mut wrapped, opts) {
        Ok(t) => t,
        Err(never) => match never {},
    }
}

/// Step along `direction` from `origin` minimising `cost`, as in one Powell
/// line search. Bounds apply in the same coordinates as `origin`.
pub fn line_minimize(
    mut cost: impl FnMut(&[f64]) -> f64,
    origin: &[f64],
    direction: &[f64],
    step_tolerance: f64,
    bounds: Option<&[(f64, f64)]>,
) -> f64 {
    assert!(direction.iter().any(|v| *v != 0.0), "direction must be non-zero");
    let f0 = cost(origin);
    let mut f1d = |t: f64| Ok::<_, std::convert::Infallible>(Some(cost(&along(origin, direction, t))));
    match line_search(&mut f1d, f0, 1.0, step_tolerance, t_range(origin, direction, bounds)) {
        Ok(r) => r.t,
        Err(never) => match never {},
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parabola_line_search() {
        let t = line_minimize(|p| (p[0] - 2.0).powi(2), &[0.0], &[1.0], 1e-4, None);
        assert!((t - 2.0).abs() < 1e-3, "{t}");
        let t = line_minimize(|p| (p[0] + 3.0).powi(2), &[0.0], &[1.0], 1e-4, None);
        assert!((t + 3.0).abs() < 1e-3, "{t}");
    }

    #[test]
    fn flat_cost_stays_put() {
        assert_eq!(line_minimize(|_| 7.0, &[0.5, 0.5], &[1.0, 0.0], 1e-3, None), 0.0);
    }

    #[test]
    fn monotone_cost_hits_bound() {
        let b = [(-1.0, 2.5)];
        let t = line_minimize(|p| -p[0], &[0.0], &[1.0], 1e-3, Some(&b));
        assert_eq!(t, 2.5);
    }

    #[test]
    fn quadratic_in_log_space() {
        let (a, b) = (1.3f64.ln(), 1.6f64.ln());
        let trace = minimize(
            |k| (k[0].ln() - a).powi(2) + (k[1].ln() - b).powi(2),
            &SearchOptions::lambda_default(),
        );
        assert!((trace.best_point[0] - 1.3).abs() < 0.05, "{:?}", trace.best_point);
        assert!((trace.best_point[1] - 1.6).abs() < 0.05, "{:?}", trace.best_point);
        assert!(trace.evaluations <= 60, "{}", trace.evaluations);
        assert_eq!(trace.evaluations, trace.entries.len());
        let min = trace.entries.iter().map(|e| e.cost).fold(f64::INFINITY, f64::min);
        assert_eq!(trace.best_cost, min);
    }

    #[test]
    fn start_at_minimum() {
        let opts = SearchOptions {
            start: vec![1.3, 1.6],
            ..SearchOptions::lambda_default()
        };
        let (a, b) = (1.3f64.ln(), 1.6f64.ln());
        let trace = minimize(|k| (k[0].ln() - a).powi(2) + (k[1].ln() - b).powi(2), &opts);
        assert_eq!(trace.cycles, 1);
        assert_eq!(trace.best_point, vec![1.3, 1.6]);
        assert_eq!(trace.reason, Convergence::Tolerance);
    }

    #[test]
    fn budget_is_respected() {
        let opts = SearchOptions {
            max_evaluations: 7,
            ..SearchOptions::lambda_default()
        };
        let trace = minimize(|k| (k[0] - 3.0).powi(2) + (k[1] - 0.2).powi(2), &opts);
        assert_eq!(trace.evaluations, 7);
        assert_eq!(trace.reason, Convergence::MaxIter);
    }

    #[test]
    fn trace_lines_round_trip() {
        let trace = minimize(|k| (k[0] - 1.1).powi(2) + k[1], &SearchOptions::lambda_default());
        let back = OptimizationTrace::entries_from_json_lines(&trace.to_json_lines()).unwrap();
        assert_eq!(back, trace.entries);
    }
}
