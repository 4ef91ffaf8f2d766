//! Deterministic mock codec with planted rate and quality optima.
//!
//! Rate: `R₀ · 2^(−qp/d) · (1 + P(k))` with
//! `P(k) = γ₁(ln k₁ − ln k₁*)² + γ₂(ln k₂ − ln k₂*)²`.
//!
//! Quality under metric M:
//! `a_M − b_M·qp + b_M·(d/ln 2)·[ln(1+P(k)) − ln(1+P_M(k)) − Φ_M(qp)]`
//! where `P_M` is `P` centred on the metric's own optimum and
//! `Φ_M = ω_M·σ·[(o − o*)² − o*²]` rewards chroma offsets `o` near the
//! clip's planted offsets `o*(qp)`. With this form the log rate is a
//! constant shift of the baseline at equal quality, so
//! `BD-Rate_M(k) = (1 + P_M(k)) / (1 + P_M(1, 1)) − 1` without offsets.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::metrics::{Metric, PlaneScope};

use super::chroma::ChromaOffsetPolicy;
use super::{DecodedOutput, EncodeResult, EncodeSpec, EncoderAdapter, HarnessError};

pub const MOCK_ADAPTER_ID: &str = "mock";

/// Quality line of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityLine {
    pub intercept: f64,
    pub slope: f64,
}

/// Parameters of one mock clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockClip {
    pub id: String,
    pub base_rate: f64,
    /// qp increase that halves the rate.
    pub qp_per_halving: f64,
    pub gamma: (f64, f64),
    /// Rate-optimal `(k₁*, k₂*)`.
    pub k_star: (f64, f64),
    /// Metric-specific optima; metrics not listed use `k_star`.
    pub metric_optima: BTreeMap<String, (f64, f64)>,
    pub quality: BTreeMap<String, QualityLine>,
    /// Planted chroma offset policy.
    pub offset_star: ChromaOffsetPolicy,
    pub chroma_sensitivity: f64,
    /// `A` in `λ = k·A·q_dc²`.
    pub lambda_a: f64,
    pub frames: u64,
}

fn default_quality(metric: Metric) -> QualityLine {
    match metric {
        Metric::MsSsim => QualityLine {
            intercept: 1.0,
            slope: 0.0015,
        },
        Metric::HdrVqm => QualityLine {
            intercept: 32.0,
            slope: 0.3,
        },
        Metric::Ciede2000 => QualityLine {
            intercept: 52.0,
            slope: 0.28,
        },
        Metric::De100 => QualityLine {
            intercept: 48.0,
            slope: 0.25,
        },
        Metric::Psnrl100 => QualityLine {
            intercept: 62.0,
            slope: 0.4,
        },
        Metric::PsnrU | Metric::PsnrV | Metric::WpsnrU | Metric::WpsnrV => QualityLine {
            intercept: 60.0,
            slope: 0.3,
        },
        _ => QualityLine {
            intercept: 56.0,
            slope: 0.35,
        },
    }
}

/// Weight of the chroma term for a metric.
pub fn chroma_weight(metric: Metric) -> f64 {
    match metric.planes() {
        PlaneScope::Luma => 0.0,
        PlaneScope::Chroma | PlaneScope::All => 1.0,
    }
}

/// Stub for the encoder's dc quantizer lookup.
pub fn q_dc_stub(qp: u8) -> f64 {
    4.0 + 4.0 * f64::from(qp)
}

impl MockClip {
    /// Clip with rate optimum `k_star` shared by every metric.
    pub fn new(id: impl Into<String>, k_star: (f64, f64)) -> Self {
        MockClip {
            id: id.into(),
            base_rate: 2.0e7,
            qp_per_halving: 8.0,
            gamma: (0.6, 0.4),
            k_star,
            metric_optima: BTreeMap::new(),
            quality: Metric::ALL
                .iter()
                .map(|&m| (m.name().to_string(), default_quality(m)))
                .collect(),
            offset_star: ChromaOffsetPolicy::new(-0.49, 9.26),
            chroma_sensitivity: 0.001,
            lambda_a: 3.7,
            frames: 10,
        }
    }

    /// Built-in clips `mock-a`, `mock-b`, `mock-c`.
    ///
    /// Luma-only metrics prefer a different operating point than the rate
    /// optimum so metrics disagree on the best `(k₁, k₂)`.
    pub fn builtin(id: &str) -> Option<Self> {
        let (k_star, luma_scale, base_rate) = match id {
            "mock-a" => ((1.3, 1.6), (0.85, 1.2), 2.0e7),
            "mock-b" => ((1.1, 1.4), (0.8, 1.25), 1.2e7),
            "mock-c" => ((1.5, 1.2), (0.9, 1.3), 3.5e7),
            _ => return None,
        };
        let mut clip = MockClip::new(id, k_star);
        clip.base_rate = base_rate;
        for m in Metric::ALL {
            if m.planes() == PlaneScope::Luma {
                clip.metric_optima
                    .insert(m.name().to_string(), (k_star.0 * luma_scale.0, k_star.1 * luma_scale.1));
            }
        }
        Some(clip)
    }

    pub const BUILTIN_IDS: [&'static str; 3] = ["mock-a", "mock-b", "mock-c"];

    fn penalty(&self, k: (f64, f64), centre: (f64, f64)) -> f64 {
        let u = k.0.ln() - centre.0.ln();
        let v = k.1.ln() - centre.1.ln();
        self.gamma.0 * u * u + self.gamma.1 * v * v
    }

    pub fn optimum_for(&self, metric: &str) -> (f64, f64) {
        self.metric_optima.get(metric).copied().unwrap_or(self.k_star)
    }

    pub fn rate(&self, qp: u8, k: (f64, f64)) -> f64 {
        self.base_rate * (-f64::from(qp) / self.qp_per_halving).exp2() * (1.0 + self.penalty(k, self.k_star))
    }

    /// Score of `metric`, or `None` if the clip has no quality line for it.
    pub fn quality(&self, metric: &str, qp: u8, k: (f64, f64), chroma: Option<&ChromaOffsetPolicy>) -> Option<f64> {
        let line = self.quality.get(metric)?;
        let omega = metric.parse::<Metric>().map(chroma_weight).unwrap_or(0.0);
        let o = chroma.map_or(0, |p| p.offset(qp)) as f64;
        let o_star = self.offset_star.offset(qp) as f64;
        let phi = omega * self.chroma_sensitivity * ((o - o_star).powi(2) - o_star * o_star);
        let shift =
            (1.0 + self.penalty(k, self.k_star)).ln() - (1.0 + self.penalty(k, self.optimum_for(metric))).ln() - phi;
        Some(line.intercept - line.slope * f64::from(qp) + line.slope * (self.qp_per_halving / LN_2) * shift)
    }

    /// Closed-form BD-Rate of `k` against `(1, 1)` under `metric`, without
    /// chroma offsets.
    pub fn closed_form_bd_rate(&self, metric: &str, k: (f64, f64)) -> f64 {
        let centre = self.optimum_for(metric);
        (1.0 + self.penalty(k, centre)) / (1.0 + self.penalty((1.0, 1.0), centre)) - 1.0
    }

    /// `λ = k · A · q_dc(qp)²`.
    pub fn lambda(&self, qp: u8, k: f64) -> f64 {
        k * self.lambda_a * q_dc_stub(qp).powi(2)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let ok = self.base_rate > 0.0
            && self.qp_per_halving > 0.0
            && self.gamma.0 > 0.0
            && self.gamma.1 > 0.0
            && self.k_star.0 > 0.0
            && self.k_star.1 > 0.0
            && self.metric_optima.values().all(|k| k.0 > 0.0 && k.1 > 0.0)
            && (3.2..=4.2).contains(&self.lambda_a)
            && self.frames > 0;
        if ok {
            Ok(())
        } else {
            Err(HarnessError::Config(format!("invalid mock clip {}", self.id)))
        }
    }
}

/// Mock encoder over a set of [`MockClip`]s.
#[derive(Debug, Clone)]
pub struct MockAdapter {
    clips: BTreeMap<String, MockClip>,
}

impl MockAdapter {
    pub fn new(clips: impl IntoIterator<Item = MockClip>) -> Result<Self, HarnessError> {
        let clips: BTreeMap<_, _> = clips.into_iter().map(|c| (c.id.clone(), c)).collect();
        for c in clips.values() {
            c.validate()?;
        }
        Ok(MockAdapter { clips })
    }

    /// Adapter over the built-in clips.
    pub fn builtin() -> Self {
        MockAdapter::new(MockClip::BUILTIN_IDS.iter().filter_map(|id| MockClip::builtin(id)))
            .expect("built-in mock clips are valid")
    }

    pub fn clip(&self, id: &str) -> Option<&MockClip> {
        self.clips.get(id)
    }

    pub fn clip_ids(&self) -> impl Iterator<Item = &str> {
        self.clips.keys().map(String::as_str)
    }
}

/// Result the mock codec produces for `spec`.
pub fn mock_encode(spec: &EncodeSpec, clip: &MockClip) -> EncodeResult {
    let k = (spec.k1, spec.k2);
    let quality = clip
        .quality
        .keys()
        .filter_map(|m| {
            clip.quality(m, spec.qp, k, spec.chroma.as_ref())
                .map(|q| (m.clone(), q))
        })
        .collect();
    let log = format!(
        "mock {} qp={} k1={} k2={} lambda={}",
        clip.id,
        spec.qp,
        spec.k1,
        spec.k2,
        clip.lambda(spec.qp, spec.k1)
    );
    EncodeResult {
        bitrate_bps: clip.rate(spec.qp, k),
        frames: clip.frames,
        wall_ms: 0,
        adapter: MOCK_ADAPTER_ID.to_string(),
        spec_digest: String::new(),
        log_digest: hex::encode(Sha256::digest(log.as_bytes())),
        output: DecodedOutput::Mock { quality },
    }
}

impl EncoderAdapter for MockAdapter {
    fn id(&self) -> &str {
        MOCK_ADAPTER_ID
    }

    fn fingerprint(&self) -> String {
        let json = serde_json::to_string(&self.clips).expect("mock clips serialise");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    fn encode(&self, spec: &EncodeSpec) -> Result<EncodeResult, HarnessError> {
        let clip = self
            .clips
            .get(&spec.clip)
            .ok_or_else(|| HarnessError::UnknownClip(spec.clip.clone()))?;
        Ok(mock_encode(spec, clip))
    }
}
