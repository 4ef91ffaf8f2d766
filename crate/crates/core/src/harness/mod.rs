//! Encoder harness: encode specs, adapters (mock and external), a
//! content-addressed single-flight cache, and RD curve assembly.

mod chroma;
mod external;
mod mock;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::media::{read_y4m_file, MediaError};
use crate::metrics::{compute_all, Metric, MetricError, MetricOptions};
use crate::rd::{RdCurve, RdError, RdPoint, MAX_QP};

pub use chroma::{chroma_qp_offset, ChromaOffsetPolicy, CHROMA_OFFSET_MAX, CHROMA_OFFSET_MIN};
pub use external::{ExternalAdapter, ExternalConfig, DECODER_PLACEHOLDERS, ENCODER_PLACEHOLDERS};
pub use mock::{chroma_weight, mock_encode, q_dc_stub, MockAdapter, MockClip, QualityLine, MOCK_ADAPTER_ID};

/// Environment variable naming the persistent cache directory.
pub const CACHE_ENV: &str = "HDRRDO_CACHE";
pub const DEFAULT_PRESET: &str = "speed6-random-access";
pub const ALL_INTRA_PRESET: &str = "all-intra";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("no adapter registered as {0:?}")]
    UnknownAdapter(String),
    #[error("unknown clip {0:?}")]
    UnknownClip(String),
    #[error("invalid encode spec: {0}")]
    InvalidSpec(String),
    #[error("failed to start {program}: {source}")]
    Spawn {
        program: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{program} exited with status {status:?}; stderr tail:\n{stderr_tail}")]
    EncoderFailed {
        program: String,
        status: Option<i32>,
        stderr_tail: String,
    },
    #[error("{program} timed out after {after_ms} ms; stderr tail:\n{stderr_tail}")]
    Timeout {
        program: String,
        after_ms: u64,
        stderr_tail: String,
    },
    #[error("expected output {0} was not produced")]
    MissingOutput(PathBuf),
    #[error("metric {0:?} is not available for this output")]
    MetricUnavailable(String),
    #[error("clip {clip}: {source}")]
    Clip {
        clip: String,
        #[source]
        source: Box<HarnessError>,
    },
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Rd(#[from] RdError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Wraps the error with the clip it came from.
    pub fn in_clip(self, clip: &str) -> Self {
        match self {
            e @ HarnessError::Clip { .. } => e,
            e => HarnessError::Clip {
                clip: clip.to_string(),
                source: Box::new(e),
            },
        }
    }

    /// Innermost error, skipping clip context.
    pub fn root(&self) -> &HarnessError {
        match self {
            HarnessError::Clip { source, .. } => source.root(),
            e => e,
        }
    }
}

/// Everything that determines an encode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeSpec {
    pub clip: String,
    pub qp: u8,
    /// Keyframe λ modifier.
    pub k1: f64,
    /// Golden / alternate-reference λ modifier.
    pub k2: f64,
    pub chroma: Option<ChromaOffsetPolicy>,
    pub adapter: String,
    pub preset: String,
}

impl EncodeSpec {
    pub fn new(clip: impl Into<String>, qp: u8, k1: f64, k2: f64) -> Self {
        EncodeSpec {
            clip: clip.into(),
            qp,
            k1,
            k2,
            chroma: None,
            adapter: MOCK_ADAPTER_ID.to_string(),
            preset: DEFAULT_PRESET.to_string(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.qp > MAX_QP {
            return Err(HarnessError::InvalidSpec(format!("qp {} > {MAX_QP}", self.qp)));
        }
        if !(self.k1 > 0.0 && self.k1.is_finite() && self.k2 > 0.0 && self.k2.is_finite()) {
            return Err(HarnessError::InvalidSpec(format!(
                "k1={} k2={} must be positive",
                self.k1, self.k2
            )));
        }
        Ok(())
    }

    /// Stable digest over every field plus the adapter fingerprint.
    pub fn digest(&self, fingerprint: &str) -> String {
        let canonical = serde_json::to_string(self).expect("spec serialises");
        let mut h = Sha256::new();
        h.update(canonical.as_bytes());
        h.update(b"\n");
        h.update(fingerprint.as_bytes());
        hex::encode(h.finalize())
    }
}

/// Tag describing a λ / chroma configuration, used to label curves.
pub fn config_tag(k: (f64, f64), chroma: Option<&ChromaOffsetPolicy>) -> String {
    let mut tag = format!("k1={},k2={}", k.0, k.1);
    if let Some(p) = chroma {
        tag.push_str(&format!(",co=({},{},{})", p.c, p.k_offset, p.l_offset));
    }
    tag
}

/// Where the decoded sequence lives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecodedOutput {
    /// Mock codecs report scores directly.
    Mock {
        quality: BTreeMap<String, f64>,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeResult {
    pub bitrate_bps: f64,
    pub frames: u64,
    pub wall_ms: u64,
    pub adapter: String,
    pub spec_digest: String,
    pub log_digest: String,
    pub output: DecodedOutput,
}

/// An encoder backend.
pub trait EncoderAdapter: Send + Sync {
    fn id(&self) -> &str;

    /// Digest of everything besides the spec that affects results.
    fn fingerprint(&self) -> String;

    fn encode(&self, spec: &EncodeSpec) -> Result<EncodeResult, HarnessError>;

    /// Reference Y4M of a clip, for adapters that produce decoded files.
    fn reference(&self, _clip: &str) -> Option<PathBuf> {
        None
    }
}

type Slot = Arc<Mutex<Option<EncodeResult>>>;

/// In-memory cache with optional on-disk persistence. Concurrent requests
/// for the same key run the encoder once.
#[derive(Debug, Default)]
pub struct EncodeCache {
    dir: Option<PathBuf>,
    slots: Mutex<HashMap<String, Slot>>,
    quality: Mutex<HashMap<String, f64>>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

impl EncodeCache {
    pub fn in_memory() -> Self {
        EncodeCache::default()
    }

    pub fn persistent(dir: impl Into<PathBuf>) -> Result<Self, HarnessError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(EncodeCache {
            dir: Some(dir),
            ..EncodeCache::default()
        })
    }

    /// Persistent when [`CACHE_ENV`] is set, in-memory otherwise.
    pub fn from_env() -> Result<Self, HarnessError> {
        match std::env::var_os(CACHE_ENV) {
            Some(dir) if !dir.is_empty() => EncodeCache::persistent(PathBuf::from(dir)),
            _ => Ok(EncodeCache::in_memory()),
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn result_path(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.json")))
    }

    fn quality_path(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.quality.json")))
    }

    /// Returns the cached result for `key` or runs `encode`; the flag is
    /// true when `encode` ran.
    pub fn get_or_encode(
        &self,
        key: &str,
        encode: impl FnOnce() -> Result<EncodeResult, HarnessError>,
    ) -> Result<(EncodeResult, bool), HarnessError> {
        let slot = self.slots.lock().unwrap().entry(key.to_string()).or_default().clone();
        let mut guard = slot.lock().unwrap();
        if let Some(hit) = guard.as_ref() {
            return Ok((hit.clone(), false));
        }
        if let Some(path) = self.result_path(key) {
            if let Ok(bytes) = fs::read(&path) {
                match serde_json::from_slice::<EncodeResult>(&bytes) {
                    Ok(hit) => {
                        *guard = Some(hit.clone());
                        return Ok((hit, false));
                    }
                    Err(e) => log::warn!("ignoring unreadable cache entry {}: {e}", path.display()),
                }
            }
        }
        let fresh = encode()?;
        if let Some(path) = self.result_path(key) {
            write_atomic(&path, serde_json::to_string_pretty(&fresh)?.as_bytes())?;
        }
        *guard = Some(fresh.clone());
        Ok((fresh, true))
    }

    fn quality_lookup(&self, key: &str, metric: &str) -> Option<f64> {
        let composite = format!("{key}/{metric}");
        if let Some(v) = self.quality.lock().unwrap().get(&composite) {
            return Some(*v);
        }
        let stored: BTreeMap<String, f64> = self
            .quality_path(key)
            .and_then(|p| fs::read(p).ok())
            .and_then(|b| serde_json::from_slice(&b).ok())?;
        let v = *stored.get(metric)?;
        self.quality.lock().unwrap().insert(composite, v);
        Some(v)
    }

    fn quality_store(&self, key: &str, metric: &str, value: f64) -> Result<(), HarnessError> {
        let mut map = self.quality.lock().unwrap();
        map.insert(format!("{key}/{metric}"), value);
        if let Some(path) = self.quality_path(key) {
            let prefix = format!("{key}/");
            let stored: BTreeMap<&str, f64> = map
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(&prefix).map(|m| (m, *v)))
                .collect();
            write_atomic(&path, serde_json::to_string_pretty(&stored)?.as_bytes())?;
        }
        Ok(())
    }
}

/// Encoder settings shared by every point of a curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeSettings {
    pub adapter: String,
    pub preset: String,
    pub chroma: Option<ChromaOffsetPolicy>,
}

impl Default for EncodeSettings {
    fn default() -> Self {
        EncodeSettings {
            adapter: MOCK_ADAPTER_ID.to_string(),
            preset: DEFAULT_PRESET.to_string(),
            chroma: None,
        }
    }
}

/// Dispatches encode specs to registered adapters through the cache.
pub struct Harness {
    adapters: BTreeMap<String, Arc<dyn EncoderAdapter>>,
    cache: EncodeCache,
    invocations: AtomicU64,
}

impl std::fmt::Debug for Harness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Harness")
            .field("adapters", &self.adapters.keys().collect::<Vec<_>>())
            .field("cache", &self.cache)
            .field("invocations", &self.invocations())
            .finish()
    }
}

impl Harness {
    pub fn new(cache: EncodeCache) -> Self {
        Harness {
            adapters: BTreeMap::new(),
            cache,
            invocations: AtomicU64::new(0),
        }
    }

    /// In-memory harness with the built-in mock adapter.
    pub fn mock() -> Self {
        let mut h = Harness::new(EncodeCache::in_memory());
        h.register(Arc::new(MockAdapter::builtin())).expect("fresh harness");
        h
    }

    pub fn register(&mut self, adapter: Arc<dyn EncoderAdapter>) -> Result<(), HarnessError> {
        let id = adapter.id().to_string();
        if self.adapters.contains_key(&id) {
            return Err(HarnessError::Config(format!("adapter {id:?} registered twice")));
        }
        self.adapters.insert(id, adapter);
        Ok(())
    }

    pub fn cache(&self) -> &EncodeCache {
        &self.cache
    }

    /// Encoder invocations so far (cache hits excluded).
    pub fn invocations(&self) -> u64 {
        self.invocations.load(Ordering::SeqCst)
    }

    fn adapter(&self, id: &str) -> Result<&Arc<dyn EncoderAdapter>, HarnessError> {
        self.adapters
            .get(id)
            .ok_or_else(|| HarnessError::UnknownAdapter(id.to_string()))
    }

    pub fn encode(&self, spec: &EncodeSpec) -> Result<EncodeResult, HarnessError> {
        spec.validate()?;
        let adapter = self.adapter(&spec.adapter)?;
        let key = spec.digest(&adapter.fingerprint());
        let (result, _) = self.cache.get_or_encode(&key, || {
            self.invocations.fetch_add(1, Ordering::SeqCst);
            let mut r = adapter.encode(spec)?;
            r.spec_digest = key.clone();
            if !(r.bitrate_bps > 0.0 && r.bitrate_bps.is_finite()) {
                return Err(HarnessError::InvalidSpec(format!(
                    "adapter reported bitrate {}",
                    r.bitrate_bps
                )));
            }
            Ok(r)
        })?;
        Ok(result)
    }

    /// Score of `metric` for an encode result.
    pub fn quality(&self, spec: &EncodeSpec, result: &EncodeResult, metric: &str) -> Result<f64, HarnessError> {
        match &result.output {
            DecodedOutput::Mock { quality } => quality
                .get(metric)
                .copied()
                .ok_or_else(|| HarnessError::MetricUnavailable(metric.to_string())),
            DecodedOutput::File { path } => {
                if let Some(v) = self.cache.quality_lookup(&result.spec_digest, metric) {
                    return Ok(v);
                }
                let m: Metric = metric.parse()?;
                let reference = self
                    .adapter(&spec.adapter)?
                    .reference(&spec.clip)
                    .ok_or_else(|| HarnessError::UnknownClip(spec.clip.clone()))?;
                let (_, ref_frames) = read_y4m_file(&reference)?;
                let (_, test_frames) = read_y4m_file(path)?;
                let report = compute_all(&ref_frames, &test_frames, &[m], &MetricOptions::default())?;
                let v = report
                    .aggregate(m)
                    .ok_or_else(|| HarnessError::MetricUnavailable(metric.to_string()))?;
                self.cache.quality_store(&result.spec_digest, metric, v)?;
                Ok(v)
            }
        }
    }

    /// One curve per metric for a clip at `(k₁, k₂)`; the qp encodes run
    /// concurrently and are shared across metrics.
    pub fn rd_curves_for(
        &self,
        clip: &str,
        k: (f64, f64),
        qps: &[u8],
        metrics: &[&str],
        settings: &EncodeSettings,
    ) -> Result<Vec<RdCurve>, HarnessError> {
        let specs: Vec<EncodeSpec> = qps
            .iter()
            .map(|&qp| EncodeSpec {
                clip: clip.to_string(),
                qp,
                k1: k.0,
                k2: k.1,
                chroma: settings.chroma,
                adapter: settings.adapter.clone(),
                preset: settings.preset.clone(),
            })
            .collect();
        let results: Vec<EncodeResult> = specs
            .par_iter()
            .map(|s| self.encode(s))
            .collect::<Result<_, _>>()
            .map_err(|e| e.in_clip(clip))?;
        let tag = config_tag(k, settings.chroma.as_ref());
        metrics
            .iter()
            .map(|&metric| {
                let points = specs
                    .iter()
                    .zip(&results)
                    .map(|(s, r)| Ok(RdPoint::new(r.bitrate_bps, self.quality(s, r, metric)?, s.qp)?))
                    .collect::<Result<Vec<_>, HarnessError>>()?;
                Ok(RdCurve::new(clip, tag.clone(), metric, points)?)
            })
            .collect::<Result<_, HarnessError>>()
            .map_err(|e: HarnessError| e.in_clip(clip))
    }

    /// Curve of one metric for a clip at `(k₁, k₂)`.
    pub fn rd_points_for(
        &self,
        clip: &str,
        k: (f64, f64),
        qps: &[u8],
        metric: &str,
        settings: &EncodeSettings,
    ) -> Result<RdCurve, HarnessError> {
        Ok(self
            .rd_curves_for(clip, k, qps, &[metric], settings)?
            .pop()
            .expect("one curve per metric"))
    }
}
