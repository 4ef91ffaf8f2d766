//! Corpus × optimisation-metric campaigns with resumable, content-addressed
//! results.
//!
//! Layout of a campaign directory:
//!
//! ```text
//! result.json                      manifest with the BD-Rate matrix
//! clips/<clip>/<column>/outcome.json
//! clips/<clip>/<column>/trace.jsonl
//! table.md, table.csv, correlation.csv, heatmap.svg
//! ```
//!
//! Nothing volatile (timings, encoder invocation counts) is written to the
//! JSON files, so reruns from a complete cache reproduce them byte for byte.

mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::harness::{
    ChromaOffsetPolicy, EncodeCache, EncodeSettings, ExternalAdapter, ExternalConfig, Harness, HarnessError,
    MockAdapter, DEFAULT_PRESET, MOCK_ADAPTER_ID,
};
use crate::metrics::Metric;
use crate::optimizer::{optimize_lambda, Convergence, LambdaProblem, OptimizationTrace, SearchOptions};
use crate::rd::{bd_rate, RdError, DEFAULT_QPS};

pub use report::{
    average_ranks, read_marked_table, spearman, CorrelationMatrix, CrossMetricTable, MarkedTable, RowMarks,
    TableColumn, TableRow,
};

pub const RESULT_FILE: &str = "result.json";
pub const DEFAULT_COLUMN: &str = "Default+";

#[derive(Debug, thiserror::Error)]
pub enum CampaignError {
    #[error("campaign configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChromaMode {
    #[default]
    Off,
    On,
    Both,
}

/// External encoder settings inside a campaign file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalSettings {
    pub encoder: Vec<String>,
    #[serde(default)]
    pub decoder: Option<Vec<String>>,
    pub clips: BTreeMap<String, PathBuf>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    3600
}

fn default_adapter() -> String {
    MOCK_ADAPTER_ID.to_string()
}

fn default_qps() -> Vec<u8> {
    DEFAULT_QPS.to_vec()
}

fn default_preset() -> String {
    DEFAULT_PRESET.to_string()
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub clips: Vec<String>,
    pub optimization_metrics: Vec<String>,
    pub evaluation_metrics: Vec<String>,
    #[serde(default)]
    pub chroma_offsets: ChromaMode,
    #[serde(default)]
    pub chroma_policy: ChromaOffsetPolicy,
    #[serde(default = "default_adapter")]
    pub adapter: String,
    #[serde(default)]
    pub external: Option<ExternalSettings>,
    #[serde(default = "default_qps")]
    pub qps: Vec<u8>,
    #[serde(default = "default_preset")]
    pub preset: String,
    #[serde(default)]
    pub search: Option<SearchOptions>,
    pub output_dir: PathBuf,
    /// Optimise clips concurrently.
    #[serde(default = "default_true")]
    pub parallel: bool,
}

impl CampaignConfig {
    pub fn from_file(path: &Path) -> Result<Self, CampaignError> {
        let text = fs::read_to_string(path)?;
        let mut cfg: CampaignConfig = serde_json::from_str(&text).map_err(|e| CampaignError::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        if cfg.output_dir.is_relative() {
            if let Some(parent) = path.parent() {
                cfg.output_dir = parent.join(&cfg.output_dir);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        let bad = |m: &str| CampaignError::Config(m.to_string());
        if self.clips.is_empty() {
            return Err(bad("no clips"));
        }
        if self.optimization_metrics.is_empty() && self.chroma_offsets == ChromaMode::Off {
            return Err(bad("no optimisation metrics"));
        }
        if self.evaluation_metrics.is_empty() {
            return Err(bad("no evaluation metrics"));
        }
        if self.qps.len() < 2 {
            return Err(bad("need at least two qp values"));
        }
        for m in self.optimization_metrics.iter().chain(&self.evaluation_metrics) {
            m.parse::<Metric>()
                .map_err(|_| CampaignError::Config(format!("metric {m:?} is not registered")))?;
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = self.clips.iter().find(|c| !seen.insert(*c)) {
            return Err(CampaignError::Config(format!("clip {dup:?} listed twice")));
        }
        if self.adapter != MOCK_ADAPTER_ID && self.external.is_none() {
            return Err(CampaignError::Config(format!(
                "adapter {:?} needs an `external` section",
                self.adapter
            )));
        }
        if let Some(s) = &self.search {
            s.validate().map_err(CampaignError::Config)?;
        }
        Ok(())
    }

    /// Digest of everything that affects results (the output directory
    /// and the parallelism flag excluded).
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.parallel = true;
        let json = serde_json::to_string(&c).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn search_options(&self) -> SearchOptions {
        self.search.clone().unwrap_or_else(SearchOptions::lambda_default)
    }

    pub fn columns(&self) -> Vec<ColumnSpec> {
        let plain = self.optimization_metrics.iter().map(|m| ColumnSpec {
            name: m.clone(),
            metric: Some(m.clone()),
            chroma_offsets: false,
        });
        let co = std::iter::once(ColumnSpec {
            name: DEFAULT_COLUMN.to_string(),
            metric: None,
            chroma_offsets: true,
        })
        .chain(self.optimization_metrics.iter().map(|m| ColumnSpec {
            name: format!("{m}+"),
            metric: Some(m.clone()),
            chroma_offsets: true,
        }));
        match self.chroma_offsets {
            ChromaMode::Off => plain.collect(),
            ChromaMode::On => co.collect(),
            ChromaMode::Both => plain.chain(co).collect(),
        }
    }

    fn settings(&self, chroma: bool) -> EncodeSettings {
        EncodeSettings {
            adapter: self.adapter.clone(),
            preset: self.preset.clone(),
            chroma: chroma.then_some(self.chroma_policy),
        }
    }
}

/// Builds a harness with the adapter a campaign asks for.
pub fn build_harness(config: &CampaignConfig, cache: EncodeCache) -> Result<Harness, CampaignError> {
    let mut h = Harness::new(cache);
    h.register(Arc::new(MockAdapter::builtin()))?;
    if let Some(ext) = &config.external {
        let work_dir = config.output_dir.join("encodes");
        let adapter = ExternalAdapter::new(ExternalConfig {
            id: config.adapter.clone(),
            encoder: ext.encoder.clone(),
            decoder: ext.decoder.clone(),
            clips: ext.clips.clone(),
            work_dir,
            timeout: Duration::from_secs(ext.timeout_secs),
        })?;
        h.register(Arc::new(adapter))?;
    }
    Ok(h)
}

/// One optimisation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    /// `None` for the default encoder.
    pub metric: Option<String>,
    pub chroma_offsets: bool,
}

impl ColumnSpec {
    fn slug(&self) -> String {
        let base: String = self
            .name
            .trim_end_matches('+')
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
            .collect();
        if self.chroma_offsets {
            format!("{base}-co")
        } else {
            base
        }
    }
}

/// Result of one clip under one column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipOutcome {
    pub config_digest: String,
    pub clip: String,
    pub column: String,
    pub best_k: (f64, f64),
    /// Cost reached by the optimiser, as a fraction.
    pub best_cost: Option<f64>,
    pub evaluations: usize,
    pub cycles: usize,
    pub reason: Option<Convergence>,
    /// Encodes implied by the evaluations.
    pub encodes: u64,
    /// BD-Rate in percent per evaluation metric; `null` without overlap.
    pub bd_rate_percent: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipFailure {
    pub clip: String,
    pub column: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub tool_version: String,
    pub config_digest: String,
    pub columns: Vec<ColumnSpec>,
    pub evaluation_metrics: Vec<String>,
    pub clips: Vec<String>,
    /// clip → column → outcome.
    pub per_clip: BTreeMap<String, BTreeMap<String, ClipOutcome>>,
    /// Mean BD-Rate (%) over clips.
    pub matrix: CrossMetricTable,
    pub failures: Vec<ClipFailure>,
}

impl CampaignResult {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn cell(&self, eval_metric: &str, column: &str) -> Option<f64> {
        let r = self.matrix.rows.iter().position(|r| r.metric == eval_metric)?;
        let c = self.matrix.columns.iter().position(|c| c.name == column)?;
        self.matrix.rows[r].values[c]
    }

    /// Spearman correlation between evaluation metrics over every
    /// (clip, column) sample with a value for all metrics.
    pub fn correlation(&self) -> CorrelationMatrix {
        let mut samples: Vec<Vec<f64>> = vec![Vec::new(); self.evaluation_metrics.len()];
        for outcomes in self.per_clip.values() {
            for col in &self.columns {
                let Some(o) = outcomes.get(&col.name) else { continue };
                let vals: Option<Vec<f64>> = self
                    .evaluation_metrics
                    .iter()
                    .map(|m| o.bd_rate_percent.get(m).copied().flatten())
                    .collect();
                if let Some(vals) = vals {
                    for (s, v) in samples.iter_mut().zip(vals) {
                        s.push(v);
                    }
                }
            }
        }
        CorrelationMatrix::from_samples(self.evaluation_metrics.clone(), &samples)
    }

    pub fn load(dir: &Path) -> Result<Self, CampaignError> {
        let path = dir.join(RESULT_FILE);
        let bytes = fs::read(&path)?;
        serde_json::from_slice(&bytes).map_err(|e| CampaignError::Json { path, source: e })
    }

    /// Writes the manifest and every report next to it.
    pub fn write(&self, dir: &Path) -> Result<(), CampaignError> {
        fs::create_dir_all(dir)?;
        write_json(&dir.join(RESULT_FILE), self)?;
        write_reports(self, dir)
    }
}

/// Writes `table.md`, `table.csv`, `correlation.csv` and `heatmap.svg`.
pub fn write_reports(result: &CampaignResult, dir: &Path) -> Result<(), CampaignError> {
    fs::write(dir.join("table.md"), result.matrix.render_markdown())?;
    fs::write(dir.join("table.csv"), result.matrix.to_csv())?;
    let corr = result.correlation();
    fs::write(dir.join("correlation.csv"), corr.to_csv())?;
    fs::write(dir.join("heatmap.svg"), corr.to_svg())?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CampaignError> {
    let mut text = serde_json::to_string_pretty(value).expect("serialisable");
    text.push('\n');
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// A finished run and its volatile statistics.
#[derive(Debug, Clone)]
pub struct CampaignRun {
    pub result: CampaignResult,
    /// Encoder invocations made by this run (cache misses).
    pub new_encodes: u64,
    /// Clip/column outcomes loaded from an earlier run.
    pub resumed: usize,
}

fn evaluate(
    config: &CampaignConfig,
    harness: &Harness,
    clip: &str,
    col: &ColumnSpec,
    k: (f64, f64),
) -> Result<BTreeMap<String, Option<f64>>, HarnessError> {
    let metrics: Vec<&str> = config.evaluation_metrics.iter().map(String::as_str).collect();
    // The default encoder column compares offsets against no offsets;
    // optimised columns compare against the default encoder of their own
    // offset setting.
    let anchor_settings = config.settings(col.chroma_offsets && col.metric.is_some());
    let anchors = harness.rd_curves_for(clip, (1.0, 1.0), &config.qps, &metrics, &anchor_settings)?;
    let tests = harness.rd_curves_for(clip, k, &config.qps, &metrics, &config.settings(col.chroma_offsets))?;
    let mut out = BTreeMap::new();
    for (a, t) in anchors.iter().zip(&tests) {
        let v = match bd_rate(a, t) {
            Ok(r) => Some(r.percent()),
            Err(RdError::NoOverlap { .. }) => None,
            Err(e) => return Err(HarnessError::from(e).in_clip(clip)),
        };
        out.insert(a.metric.clone(), v);
    }
    Ok(out)
}

fn run_column(
    config: &CampaignConfig,
    digest: &str,
    harness: &Harness,
    clip: &str,
    col: &ColumnSpec,
    dir: &Path,
) -> Result<(ClipOutcome, bool), CampaignError> {
    let outcome_path = dir.join("outcome.json");
    if let Ok(bytes) = fs::read(&outcome_path) {
        match serde_json::from_slice::<ClipOutcome>(&bytes) {
            Ok(o) if o.config_digest == digest => return Ok((o, true)),
            Ok(_) => log::info!("{}: stale outcome from another configuration", outcome_path.display()),
            Err(e) => log::warn!("{}: unreadable outcome: {e}", outcome_path.display()),
        }
    }
    fs::create_dir_all(dir)?;
    let trace_path = dir.join("trace.jsonl");
    let (k, trace): ((f64, f64), Option<OptimizationTrace>) = match &col.metric {
        None => ((1.0, 1.0), None),
        Some(metric) => {
            let replay = fs::read_to_string(&trace_path)
                .ok()
                .and_then(|t| OptimizationTrace::entries_from_json_lines(&t).ok())
                .unwrap_or_default();
            let opts = config.search_options();
            let problem = LambdaProblem {
                harness,
                clip: clip.to_string(),
                metric: metric.clone(),
                qps: config.qps.clone(),
                settings: config.settings(col.chroma_offsets),
                penalty: opts.penalty,
            };
            let outcome = optimize_lambda(&problem, &opts, &replay)?;
            fs::write(&trace_path, outcome.trace.to_json_lines())?;
            (outcome.best_k, Some(outcome.trace))
        }
    };
    let bd = evaluate(config, harness, clip, col, k)?;
    let outcome = ClipOutcome {
        config_digest: digest.to_string(),
        clip: clip.to_string(),
        column: col.name.clone(),
        best_k: k,
        best_cost: trace.as_ref().map(|t| t.best_cost),
        evaluations: trace.as_ref().map_or(0, |t| t.evaluations),
        cycles: trace.as_ref().map_or(0, |t| t.cycles),
        reason: trace.as_ref().map(|t| t.reason),
        encodes: trace.as_ref().map_or(0, |t| t.encodes),
        bd_rate_percent: bd,
    };
    write_json(&outcome_path, &outcome)?;
    Ok((outcome, false))
}

/// Builds the mean matrix; clips are summed in sorted order so the result
/// does not depend on configuration order or scheduling.
fn build_matrix(
    config: &CampaignConfig,
    columns: &[ColumnSpec],
    per_clip: &BTreeMap<String, BTreeMap<String, ClipOutcome>>,
) -> CrossMetricTable {
    let rows = config
        .evaluation_metrics
        .iter()
        .map(|m| {
            let (dr, plane) = match m.parse::<Metric>() {
                Ok(metric) => (
                    format!("{:?}", metric.dynamic_range()).to_uppercase(),
                    format!("{:?}", metric.planes()),
                ),
                Err(_) => (String::new(), String::new()),
            };
            let values = columns
                .iter()
                .map(|col| {
                    let vals: Vec<f64> = per_clip
                        .values()
                        .filter_map(|o| o.get(&col.name))
                        .filter_map(|o| o.bd_rate_percent.get(m).copied().flatten())
                        .collect();
                    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
                })
                .collect();
            TableRow {
                metric: m.clone(),
                dynamic_range: dr,
                plane,
                values,
            }
        })
        .collect();
    CrossMetricTable {
        columns: columns
            .iter()
            .map(|c| TableColumn {
                name: c.name.clone(),
                chroma_offsets: c.chroma_offsets,
            })
            .collect(),
        rows,
    }
}

/// Runs (or resumes) a campaign and writes its outputs.
///
/// Per-clip failures are recorded in the result and do not stop other clips.
pub fn run_campaign(config: &CampaignConfig, harness: &Harness) -> Result<CampaignRun, CampaignError> {
    config.validate()?;
    let digest = config.digest();
    let columns = config.columns();
    let out = &config.output_dir;
    fs::create_dir_all(out)?;
    let before = harness.invocations();

    type ClipRun = (String, Vec<Result<(ClipOutcome, bool), (String, CampaignError)>>);
    let run_clip = |clip: &String| -> ClipRun {
        let results = columns
            .iter()
            .map(|col| {
                let dir = out.join("clips").join(clip).join(col.slug());
                run_column(config, &digest, harness, clip, col, &dir).map_err(|e| (col.name.clone(), e))
            })
            .collect();
        (clip.clone(), results)
    };
    let runs: Vec<ClipRun> = if config.parallel {
        config.clips.par_iter().map(run_clip).collect()
    } else {
        config.clips.iter().map(run_clip).collect()
    };

    let mut per_clip: BTreeMap<String, BTreeMap<String, ClipOutcome>> = BTreeMap::new();
    let mut failures = Vec::new();
    let mut resumed = 0;
    for (clip, results) in runs {
        let entry = per_clip.entry(clip.clone()).or_default();
        for r in results {
            match r {
                Ok((o, was_resumed)) => {
                    resumed += usize::from(was_resumed);
                    entry.insert(o.column.clone(), o);
                }
                Err((column, e)) => {
                    log::error!("{clip} / {column}: {e}");
                    failures.push(ClipFailure {
                        clip: clip.clone(),
                        column,
                        error: e.to_string(),
                    });
                }
            }
        }
    }
    failures.sort_by(|a, b| (&a.clip, &a.column).cmp(&(&b.clip, &b.column)));
    let mut clips = config.clips.clone();
    clips.sort();
    let result = CampaignResult {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_digest: digest,
        matrix: build_matrix(config, &columns, &per_clip),
        columns,
        evaluation_metrics: config.evaluation_metrics.clone(),
        clips,
        per_clip,
        failures,
    };
    result.write(out)?;
    Ok(CampaignRun {
        result,
        new_encodes: harness.invocations() - before,
        resumed,
    })
}
