//! Rate-quality curves and Bjøntegaard delta rate in the log-rate domain.

mod pchip;

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

pub use pchip::Pchip;

/// Default anchor quantizers.
pub const DEFAULT_QPS: [u8; 5] = [27, 39, 49, 59, 63];
pub const MAX_QP: u8 = 63;

#[derive(Debug, thiserror::Error)]
pub enum RdError {
    #[error("need at least 2 distinct points, got {0}")]
    TooFewPoints(usize),
    #[error("knots not strictly increasing: {previous} then {next}")]
    NotIncreasing { previous: f64, next: f64 },
    #[error("quality ranges do not overlap: [{q1}, {q2}]")]
    NoOverlap { q1: f64, q2: f64 },
    #[error("invalid point: {0}")]
    Invalid(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    /// Bits per second.
    pub rate_bps: f64,
    /// Score in the metric's native unit.
    pub quality: f64,
    pub qp: u8,
}

impl RdPoint {
    pub fn new(rate_bps: f64, quality: f64, qp: u8) -> Result<Self, RdError> {
        if !(rate_bps > 0.0 && rate_bps.is_finite()) {
            return Err(RdError::Invalid(format!("rate {rate_bps} must be positive and finite")));
        }
        if !quality.is_finite() {
            return Err(RdError::Invalid(format!("quality {quality} is not finite")));
        }
        if qp > MAX_QP {
            return Err(RdError::Invalid(format!("qp {qp} outside 0..={MAX_QP}")));
        }
        Ok(RdPoint { rate_bps, quality, qp })
    }

    pub fn log_rate(&self) -> f64 {
        self.rate_bps.ln()
    }
}

/// Points of one clip under one configuration, sorted by quality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdCurve {
    pub clip: String,
    /// Configuration tag such as `k1=1.3,k2=1.6`.
    pub config: String,
    pub metric: String,
    points: Vec<RdPoint>,
}

impl RdCurve {
    /// Sorts by quality and collapses equal qualities (typically capped
    /// scores) to their highest-rate point.
    pub fn new(
        clip: impl Into<String>,
        config: impl Into<String>,
        metric: impl Into<String>,
        mut points: Vec<RdPoint>,
    ) -> Result<Self, RdError> {
        let clip = clip.into();
        let metric = metric.into();
        for p in &points {
            RdPoint::new(p.rate_bps, p.quality, p.qp)?;
        }
        points.sort_by(|a, b| a.quality.total_cmp(&b.quality).then(a.rate_bps.total_cmp(&b.rate_bps)));
        let before = points.len();
        let mut kept: Vec<RdPoint> = Vec::with_capacity(before);
        for p in points {
            match kept.last_mut() {
                Some(last) if last.quality == p.quality => *last = p,
                _ => kept.push(p),
            }
        }
        if kept.len() < before {
            log::warn!(
                "{clip}/{metric}: collapsed {} point(s) with duplicate quality",
                before - kept.len()
            );
        }
        if kept.len() < 2 {
            return Err(RdError::TooFewPoints(kept.len()));
        }
        Ok(RdCurve {
            clip,
            config: config.into(),
            metric,
            points: kept,
        })
    }

    pub fn points(&self) -> &[RdPoint] {
        &self.points
    }

    pub fn quality_range(&self) -> (f64, f64) {
        (self.points[0].quality, self.points[self.points.len() - 1].quality)
    }

    /// `id` used in BD-Rate results.
    pub fn id(&self) -> String {
        format!("{}[{}]/{}", self.clip, self.config, self.metric)
    }

    /// Log-rate as a function of quality.
    pub fn interpolant(&self) -> Result<Pchip, RdError> {
        let q: Vec<f64> = self.points.iter().map(|p| p.quality).collect();
        let r: Vec<f64> = self.points.iter().map(|p| p.log_rate()).collect();
        Pchip::fit(&q, &r)
    }

    /// Same curve with every rate multiplied by `factor`.
    pub fn scaled_rates(&self, factor: f64) -> Result<Self, RdError> {
        let points = self
            .points
            .iter()
            .map(|p| RdPoint::new(p.rate_bps * factor, p.quality, p.qp))
            .collect::<Result<_, _>>()?;
        RdCurve::new(self.clip.clone(), self.config.clone(), self.metric.clone(), points)
    }

    /// Writes `qp,bitrate_bps,quality,metric` rows, header included.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), RdError> {
        write_csv(std::slice::from_ref(self), sink)
    }
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    qp: u8,
    bitrate_bps: f64,
    quality: f64,
    metric: String,
}

/// Writes several curves into one CSV table.
pub fn write_csv<W: Write>(curves: &[RdCurve], sink: W) -> Result<(), RdError> {
    let mut w = csv::Writer::from_writer(sink);
    for c in curves {
        for p in &c.points {
            w.serialize(CsvRow {
                qp: p.qp,
                bitrate_bps: p.rate_bps,
                quality: p.quality,
                metric: c.metric.clone(),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV table into one curve per metric, in first-seen order.
pub fn read_csv<R: Read>(source: R, clip: &str, config: &str) -> Result<Vec<RdCurve>, RdError> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let mut order: Vec<String> = Vec::new();
    let mut by_metric: BTreeMap<String, Vec<RdPoint>> = BTreeMap::new();
    for row in rd.deserialize::<CsvRow>() {
        let row = row?;
        let p = RdPoint::new(row.bitrate_bps, row.quality, row.qp)?;
        if !by_metric.contains_key(&row.metric) {
            order.push(row.metric.clone());
        }
        by_metric.entry(row.metric).or_default().push(p);
    }
    order
        .into_iter()
        .map(|m| {
            let pts = by_metric.remove(&m).unwrap_or_default();
            RdCurve::new(clip, config, m, pts)
        })
        .collect()
}

/// Outcome of a BD-Rate comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BdRateResult {
    /// Relative rate change of `test` against `anchor`; negative saves bits.
    pub delta: f64,
    /// Mean log-rate difference `E[r₂ − r₁]`.
    pub mean_log_diff: f64,
    pub overlap: [f64; 2],
    pub anchor: String,
    pub test: String,
}

impl BdRateResult {
    pub fn percent(&self) -> f64 {
        self.delta * 100.0
    }
}

/// Shared quality range `[max of minima, min of maxima]`.
pub fn overlap_range(anchor: &RdCurve, test: &RdCurve) -> Result<(f64, f64), RdError> {
    let (a0, a1) = anchor.quality_range();
    let (b0, b1) = test.quality_range();
    let (q1, q2) = (a0.max(b0), a1.min(b1));
    if q1 >= q2 {
        return Err(RdError::NoOverlap { q1, q2 });
    }
    Ok((q1, q2))
}

const GL_NODES: usize = 64;

/// Gauss–Legendre nodes and weights on [-1, 1].
fn gauss_legendre() -> &'static [(f64, f64)] {
    static TABLE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = GL_NODES;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let k = k as f64;
                    let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
        }
        out
    })
}

/// Integrates `f` over `[a, b]` splitting at `breaks`, with a 64-node
/// Gauss–Legendre rule on each piece.
pub fn integrate_piecewise(f: impl Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64]) -> f64 {
    let mut edges: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|&t| t > a && t < b))
        .chain(std::iter::once(b))
        .collect();
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    let rule = gauss_legendre();
    let mut total = 0.0;
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        total += half * rule.iter().map(|&(x, wt)| wt * f(mid + half * x)).sum::<f64>();
    }
    total
}

/// BD-Rate of `test` against `anchor`: `exp(E[r₂ − r₁]) − 1` over the
/// shared quality range.
pub fn bd_rate(anchor: &RdCurve, test: &RdCurve) -> Result<BdRateResult, RdError> {
    let (q1, q2) = overlap_range(anchor, test)?;
    let ra = anchor.interpolant()?;
    let rt = test.interpolant()?;
    let mut breaks = ra.knots().to_vec();
    breaks.extend_from_slice(rt.knots());
    let integral = integrate_piecewise(|q| rt.eval(q) - ra.eval(q), q1, q2, &breaks);
    let mean = integral / (q2 - q1);
    Ok(BdRateResult {
        delta: mean.exp_m1(),
        mean_log_diff: mean,
        overlap: [q1, q2],
        anchor: anchor.id(),
        test: test.id(),
    })
}
