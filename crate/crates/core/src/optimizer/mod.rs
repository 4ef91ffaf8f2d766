//! Derivative-free search and the BD-Rate cost functions it minimises.

mod powell;

use serde::{Deserialize, Serialize};

use crate::harness::{ChromaOffsetPolicy, EncodeSettings, Harness, HarnessError, ALL_INTRA_PRESET};
use crate::rd::{bd_rate, RdCurve, RdError};

pub use powell::{
    line_minimize, minimize, powell_minimize, powell_minimize_with_replay, Convergence, OptimizationTrace,
    SearchOptions, TraceEntry,
};

/// Cost of evaluations whose curves do not overlap (+100 % BD-Rate).
pub const DEFAULT_PENALTY: f64 = 1.0;

/// Metrics whose BD-Rates are summed by the chroma offset search.
pub const OFFSET_SEARCH_METRICS: [&str; 2] = ["DE100", "wPSNR-Y"];

/// BD-Rate of `test` against `anchor`, or `penalty` without overlap.
pub fn bd_rate_or_penalty(anchor: &RdCurve, test: &RdCurve, penalty: f64) -> Result<f64, RdError> {
    match bd_rate(anchor, test) {
        Ok(r) => Ok(r.delta),
        Err(RdError::NoOverlap { q1, q2 }) => {
            log::debug!("{} vs {}: no overlap [{q1}, {q2}], penalised", anchor.id(), test.id());
            Ok(penalty)
        }
        Err(e) => Err(e),
    }
}

/// Per-clip `(k₁, k₂)` cost: BD-Rate of the `k` curve against `(1, 1)`.
#[derive(Debug, Clone)]
pub struct LambdaProblem<'h> {
    pub harness: &'h Harness,
    pub clip: String,
    pub metric: String,
    pub qps: Vec<u8>,
    pub settings: EncodeSettings,
    pub penalty: f64,
}

impl LambdaProblem<'_> {
    pub fn anchor(&self) -> Result<RdCurve, HarnessError> {
        self.harness
            .rd_points_for(&self.clip, (1.0, 1.0), &self.qps, &self.metric, &self.settings)
    }

    pub fn cost(&self, k: (f64, f64)) -> Result<f64, HarnessError> {
        let anchor = self.anchor()?;
        let test = self
            .harness
            .rd_points_for(&self.clip, k, &self.qps, &self.metric, &self.settings)?;
        bd_rate_or_penalty(&anchor, &test, self.penalty).map_err(|e| HarnessError::from(e).in_clip(&self.clip))
    }
}

/// Convenience wrapper around [`LambdaProblem::cost`].
pub fn lambda_cost(
    harness: &Harness,
    clip: &str,
    k: (f64, f64),
    metric: &str,
    qps: &[u8],
    settings: &EncodeSettings,
) -> Result<f64, HarnessError> {
    LambdaProblem {
        harness,
        clip: clip.to_string(),
        metric: metric.to_string(),
        qps: qps.to_vec(),
        settings: settings.clone(),
        penalty: DEFAULT_PENALTY,
    }
    .cost(k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaOutcome {
    pub clip: String,
    pub metric: String,
    pub best_k: (f64, f64),
    pub best_bd_rate: f64,
    pub trace: OptimizationTrace,
}

/// Tunes `(k₁, k₂)` for one clip under one metric.
///
/// `replay` entries from an earlier trace are reused without re-evaluating.
pub fn optimize_lambda(
    problem: &LambdaProblem<'_>,
    opts: &SearchOptions,
    replay: &[TraceEntry],
) -> Result<LambdaOutcome, HarnessError> {
    let before = problem.harness.invocations();
    problem.anchor()?;
    let mut cost = |p: &[f64]| problem.cost((p[0], p[1]));
    let mut trace = powell_minimize_with_replay(&mut cost, opts, replay)?;
    let per_eval = problem.qps.len() as u64;
    trace.encodes = per_eval * trace.evaluations as u64 + per_eval;
    trace.encoder_invocations = problem.harness.invocations() - before;
    Ok(LambdaOutcome {
        clip: problem.clip.clone(),
        metric: problem.metric.clone(),
        best_k: (trace.best_point[0], trace.best_point[1]),
        best_bd_rate: trace.best_cost,
        trace,
    })
}

/// Corpus cost of a chroma offset policy: mean over clips of the summed
/// BD-Rates of [`OFFSET_SEARCH_METRICS`] against encodes without offsets,
/// all in the all-intra preset.
#[derive(Debug, Clone)]
pub struct OffsetProblem<'h> {
    pub harness: &'h Harness,
    pub clips: Vec<String>,
    pub qps: Vec<u8>,
    pub adapter: String,
    /// Scale `c` of the policy.
    pub c: f64,
    pub penalty: f64,
}

impl OffsetProblem<'_> {
    fn settings(&self, chroma: Option<ChromaOffsetPolicy>) -> EncodeSettings {
        EncodeSettings {
            adapter: self.adapter.clone(),
            preset: ALL_INTRA_PRESET.to_string(),
            chroma,
        }
    }

    pub fn cost(&self, k_offset: f64, l_offset: f64) -> Result<f64, HarnessError> {
        let policy = ChromaOffsetPolicy {
            c: self.c,
            k_offset,
            l_offset,
        };
        let mut total = 0.0;
        for clip in &self.clips {
            let anchors = self.harness.rd_curves_for(
                clip,
                (1.0, 1.0),
                &self.qps,
                &OFFSET_SEARCH_METRICS,
                &self.settings(None),
            )?;
            let tests = self.harness.rd_curves_for(
                clip,
                (1.0, 1.0),
                &self.qps,
                &OFFSET_SEARCH_METRICS,
                &self.settings(Some(policy)),
            )?;
            for (a, t) in anchors.iter().zip(&tests) {
                total += bd_rate_or_penalty(a, t, self.penalty).map_err(|e| HarnessError::from(e).in_clip(clip))?;
            }
        }
        Ok(total / self.clips.len() as f64)
    }
}

/// Convenience wrapper around [`OffsetProblem::cost`] with `c = 1`.
pub fn offset_cost(
    harness: &Harness,
    clips: &[String],
    point: (f64, f64),
    qps: &[u8],
    adapter: &str,
) -> Result<f64, HarnessError> {
    OffsetProblem {
        harness,
        clips: clips.to_vec(),
        qps: qps.to_vec(),
        adapter: adapter.to_string(),
        c: 1.0,
        penalty: DEFAULT_PENALTY,
    }
    .cost(point.0, point.1)
}

/// Search options for `(k_offset, l_offset)` starting at the usual
/// `(−0.46, 9.26)`.
pub fn offset_search_default() -> SearchOptions {
    let d = ChromaOffsetPolicy::default();
    SearchOptions {
        start: vec![d.k_offset, d.l_offset],
        step: vec![0.05, 1.0],
        tolerance: 5e-4,
        x_tolerance: 0.005,
        max_iterations: 10,
        max_evaluations: 100,
        log_space: false,
        bounds: Some(vec![(-1.0, 0.0), (0.0, 20.0)]),
        penalty: DEFAULT_PENALTY,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetOutcome {
    pub best: ChromaOffsetPolicy,
    pub best_cost: f64,
    pub trace: OptimizationTrace,
}

/// Tunes `(k_offset, l_offset)` over a corpus.
pub fn optimize_offsets(problem: &OffsetProblem<'_>, opts: &SearchOptions) -> Result<OffsetOutcome, HarnessError> {
    let before = problem.harness.invocations();
    let mut cost = |p: &[f64]| problem.cost(p[0], p[1]);
    let mut trace = powell_minimize(&mut cost, opts)?;
    let per_eval = (problem.qps.len() * problem.clips.len()) as u64;
    trace.encodes = per_eval * trace.evaluations as u64 + per_eval;
    trace.encoder_invocations = problem.harness.invocations() - before;
    Ok(OffsetOutcome {
        best: ChromaOffsetPolicy {
            c: problem.c,
            k_offset: trace.best_point[0],
            l_offset: trace.best_point[1],
        },
        best_cost: trace.best_cost,
        trace,
    })
}
