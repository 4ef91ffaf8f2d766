//! Objective quality metrics for HDR and SDR evaluation.
//!
//! Every dB score is capped at [`SCORE_CAP_DB`] so identical inputs stay finite
//! for BD-Rate interpolation. Sequence scores are the arithmetic mean of the
//! per-frame scores, except HDR-VQM, whose per-frame distortions are pooled
//! first and then mapped to dB.

mod hdrvqm;
mod msssim;
mod perceptual;
mod psnr;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colour::ColourError;
use crate::media::PlanarFrame;

pub use hdrvqm::{hdrvqm_distortion, hdrvqm_to_db, pu_encode, HdrVqmBackend, HdrVqmScore, PuMseBackend};
pub use msssim::{ms_ssim_plane, MS_SSIM_MIN_DIM, MS_SSIM_WEIGHTS};
pub use perceptual::{
    ciede2000_score, ciede2000_score_from_mean, de100, de100_from_mean_sq, lab_error_stats, psnrl100,
    psnrl100_from_mae, LabErrorStats, LabPipeline,
};
pub use psnr::{
    luma_weight, luma_weight_10bit, luma_weight_table, mse_to_db, plane_mse, plane_weight_maps, plane_weights,
    psnr_avg, psnr_frame, psnr_plane, weighted_mse, wpsnr_avg, wpsnr_frame, wpsnr_frame_with, wpsnr_plane,
    WEIGHT_ANCHOR_CODE, WEIGHT_MAX, WEIGHT_MIN,
};

/// Score reported for zero-error inputs.
pub const SCORE_CAP_DB: f64 = 100.0;

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("plane dimensions differ: reference {reference:?}, test {test:?}")]
    DimensionMismatch {
        reference: (usize, usize),
        test: (usize, usize),
    },
    #[error("bit depth or subsampling differ between reference and test")]
    FormatMismatch,
    #[error("colour tags differ between reference and test")]
    ColourTagMismatch,
    #[error("sequence lengths differ: reference {reference}, test {test}")]
    LengthMismatch { reference: usize, test: usize },
    #[error("picture {width}x{height} is smaller than the {min}-pixel minimum")]
    TooSmall { width: usize, height: usize, min: usize },
    #[error("empty sequence")]
    Empty,
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error("{metric}: {source}")]
    Context {
        metric: Metric,
        #[source]
        source: Box<MetricError>,
    },
    #[error(transparent)]
    Colour(#[from] ColourError),
}

/// Dynamic range a metric was designed for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DynamicRange {
    Sdr,
    Hdr,
}

/// Planes a metric looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlaneScope {
    Luma,
    Chroma,
    All,
}

/// Every metric this crate computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    MsSsim,
    Psnrl100,
    De100,
    WpsnrAvg,
    HdrVqm,
    WpsnrY,
    WpsnrU,
    WpsnrV,
    Ciede2000,
    PsnrY,
    PsnrU,
    PsnrV,
    PsnrAvg,
}

impl Metric {
    pub const ALL: [Metric; 13] = [
        Metric::MsSsim,
        Metric::Psnrl100,
        Metric::De100,
        Metric::WpsnrAvg,
        Metric::HdrVqm,
        Metric::WpsnrY,
        Metric::WpsnrU,
        Metric::WpsnrV,
        Metric::Ciede2000,
        Metric::PsnrY,
        Metric::PsnrU,
        Metric::PsnrV,
        Metric::PsnrAvg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::MsSsim => "MS-SSIM",
            Metric::Psnrl100 => "PSNRL100",
            Metric::De100 => "DE100",
            Metric::WpsnrAvg => "wPSNR-AVG",
            Metric::HdrVqm => "HDR-VQM",
            Metric::WpsnrY => "wPSNR-Y",
            Metric::WpsnrU => "wPSNR-U",
            Metric::WpsnrV => "wPSNR-V",
            Metric::Ciede2000 => "CIEDE2000",
            Metric::PsnrY => "PSNR-Y",
            Metric::PsnrU => "PSNR-U",
            Metric::PsnrV => "PSNR-V",
            Metric::PsnrAvg => "PSNR-AVG",
        }
    }

    pub fn dynamic_range(self) -> DynamicRange {
        match self {
            Metric::MsSsim | Metric::Ciede2000 | Metric::PsnrY | Metric::PsnrU | Metric::PsnrV | Metric::PsnrAvg => {
                DynamicRange::Sdr
            }
            _ => DynamicRange::Hdr,
        }
    }

    pub fn planes(self) -> PlaneScope {
        match self {
            Metric::MsSsim | Metric::Psnrl100 | Metric::HdrVqm | Metric::WpsnrY | Metric::PsnrY => PlaneScope::Luma,
            Metric::WpsnrU | Metric::WpsnrV | Metric::PsnrU | Metric::PsnrV => PlaneScope::Chroma,
            Metric::De100 | Metric::WpsnrAvg | Metric::Ciede2000 | Metric::PsnrAvg => PlaneScope::All,
        }
    }

    /// Whether the score is in dB (MS-SSIM is unitless).
    pub fn is_db(self) -> bool {
        self != Metric::MsSsim
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Metric::ALL
            .into_iter()
            .find(|m| {
                m.name()
                    .chars()
                    .filter(|c| c.is_ascii_alphanumeric())
                    .collect::<String>()
                    .to_ascii_lowercase()
                    == key
            })
            .ok_or_else(|| MetricError::UnknownMetric(s.to_string()))
    }
}

impl Serialize for Metric {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One metric's scores for a sequence pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub aggregate: f64,
    pub per_frame: Vec<f64>,
    pub metadata: BTreeMap<String, String>,
}

/// All requested scores for one (reference, test) sequence pair.
///
/// Serialises as `{metric: {aggregate, per_frame[], metadata{}}}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetricReport {
    pub entries: BTreeMap<String, MetricEntry>,
}

impl MetricReport {
    pub fn get(&self, metric: Metric) -> Option<&MetricEntry> {
        self.entries.get(metric.name())
    }

    pub fn aggregate(&self, metric: Metric) -> Option<f64> {
        self.get(metric).map(|e| e.aggregate)
    }
}

/// Options for [`compute_all`].
pub struct MetricOptions {
    pub hdrvqm_backend: Box<dyn HdrVqmBackend>,
    /// Evaluate frames on the rayon pool.
    pub parallel: bool,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions {
            hdrvqm_backend: Box::new(PuMseBackend),
            parallel: true,
        }
    }
}

/// Scores of one frame pair, in the order of the requested metric list.
fn frame_scores(
    reference: &PlanarFrame,
    test: &PlanarFrame,
    metrics: &[Metric],
    opts: &MetricOptions,
) -> Result<Vec<f64>, MetricError> {
    let wrap = |metric: Metric| {
        move |e: MetricError| MetricError::Context {
            metric,
            source: Box::new(e),
        }
    };
    let needs = |set: &[Metric]| metrics.iter().any(|m| set.contains(m));

    let psnr = if needs(&[Metric::PsnrY, Metric::PsnrU, Metric::PsnrV, Metric::PsnrAvg]) {
        Some(psnr_frame(reference, test).map_err(wrap(Metric::PsnrY))?)
    } else {
        None
    };
    let wpsnr = if needs(&[Metric::WpsnrY, Metric::WpsnrU, Metric::WpsnrV, Metric::WpsnrAvg]) {
        Some(wpsnr_frame(reference, test).map_err(wrap(Metric::WpsnrY))?)
    } else {
        None
    };
    let hdr_lab = if needs(&[Metric::De100, Metric::Psnrl100]) {
        let pipeline = LabPipeline::for_stream(
            reference.info.bit_depth,
            reference.info.colour,
            crate::colour::NormalisationPolicy::FACTOR_100,
        )
        .map_err(wrap(Metric::De100))?;
        Some(lab_error_stats(reference, test, &pipeline).map_err(wrap(Metric::De100))?)
    } else {
        None
    };

    let mut out = Vec::with_capacity(metrics.len());
    for &m in metrics {
        let v = match m {
            Metric::PsnrY => psnr.unwrap()[0],
            Metric::PsnrU => psnr.unwrap()[1],
            Metric::PsnrV => psnr.unwrap()[2],
            Metric::PsnrAvg => psnr.unwrap()[3],
            Metric::WpsnrY => wpsnr.unwrap()[0],
            Metric::WpsnrU => wpsnr.unwrap()[1],
            Metric::WpsnrV => wpsnr.unwrap()[2],
            Metric::WpsnrAvg => wpsnr.unwrap()[3],
            Metric::De100 => de100_from_mean_sq(hdr_lab.unwrap().mean_de_sq),
            Metric::Psnrl100 => psnrl100_from_mae(hdr_lab.unwrap().mean_abs_dl),
            Metric::Ciede2000 => ciede2000_score(reference, test).map_err(wrap(m))?,
            Metric::MsSsim => {
                ms_ssim_plane(&reference.y, &test.y, f64::from(reference.info.max_sample())).map_err(wrap(m))?
            }
            Metric::HdrVqm => opts.hdrvqm_backend.frame_distortion(reference, test).map_err(wrap(m))?,
        };
        out.push(v);
    }
    Ok(out)
}

fn metadata_for(metric: Metric, opts: &MetricOptions) -> BTreeMap<String, String> {
    let mut md = BTreeMap::new();
    let pooling = if metric == Metric::HdrVqm {
        "db-of-mean-frame-distortion"
    } else {
        "mean-of-frame-scores"
    };
    md.insert("pooling".into(), pooling.into());
    md.insert("unit".into(), if metric.is_db() { "dB" } else { "unitless" }.into());
    if metric.is_db() {
        md.insert("cap_db".into(), format!("{SCORE_CAP_DB}"));
    }
    match metric {
        Metric::De100 | Metric::Psnrl100 => {
            md.insert("normalisation_factor".into(), "100".into());
            md.insert("reference_white".into(), "D65 at display peak (PQ: 10000 cd/m2)".into());
            let formula = if metric == Metric::De100 {
                "10*log10(100^2/mean(dE00^2))"
            } else {
                "20*log10(100/mean(|dL*|))"
            };
            md.insert("formula".into(), formula.into());
        }
        Metric::WpsnrY | Metric::WpsnrU | Metric::WpsnrV | Metric::WpsnrAvg => {
            md.insert(
                "weight_function".into(),
                "luma-dqp-2^(clip(0.015*Y10-7.5,-3,6)/3)".into(),
            );
            if metric == Metric::WpsnrAvg {
                md.insert("plane_average".into(), "mean-of-plane-db".into());
            }
        }
        Metric::PsnrAvg => {
            md.insert("plane_average".into(), "mse-weighted 4:1:1 (420) / 1:1:1 (444)".into());
        }
        Metric::Ciede2000 => {
            md.insert("interpretation".into(), "BT.709 gamma, 100 cd/m2 white".into());
            md.insert("formula".into(), "45-20*log10(mean(dE00))".into());
        }
        Metric::MsSsim => {
            md.insert("plane".into(), "luma".into());
        }
        Metric::HdrVqm => {
            md.insert("backend".into(), opts.hdrvqm_backend.id().to_string());
            md.insert("similarity".into(), "4/(1+exp(Q))-1".into());
        }
        _ => {}
    }
    md
}

/// Computes every metric in `metrics` for aligned sequences in one pass.
///
/// Per-frame scores are kept; frames may be evaluated in parallel with
/// results identical to sequential evaluation.
pub fn compute_all(
    reference: &[PlanarFrame],
    test: &[PlanarFrame],
    metrics: &[Metric],
    opts: &MetricOptions,
) -> Result<MetricReport, MetricError> {
    if reference.len() != test.len() {
        return Err(MetricError::LengthMismatch {
            reference: reference.len(),
            test: test.len(),
        });
    }
    if reference.is_empty() {
        return Err(MetricError::Empty);
    }
    let per_frame: Vec<Vec<f64>> = if opts.parallel {
        reference
            .par_iter()
            .zip(test.par_iter())
            .map(|(r, t)| frame_scores(r, t, metrics, opts))
            .collect::<Result<_, _>>()?
    } else {
        reference
            .iter()
            .zip(test)
            .map(|(r, t)| frame_scores(r, t, metrics, opts))
            .collect::<Result<_, _>>()?
    };

    let mut report = MetricReport::default();
    for (k, &metric) in metrics.iter().enumerate() {
        let series: Vec<f64> = per_frame.iter().map(|f| f[k]).collect();
        let mut metadata = metadata_for(metric, opts);
        let aggregate = if metric == Metric::HdrVqm {
            let q = opts.hdrvqm_backend.pool(&series);
            let score = hdrvqm_to_db(q);
            metadata.insert("raw_q".into(), format!("{q:e}"));
            metadata.insert("similarity_value".into(), format!("{}", score.similarity));
            metadata.insert("saturated".into(), score.saturated.to_string());
            score.db
        } else {
            series.iter().sum::<f64>() / series.len() as f64
        };
        report.entries.insert(
            metric.name().to_string(),
            MetricEntry {
                aggregate,
                per_frame: series,
                metadata,
            },
        );
    }
    Ok(report)
}
