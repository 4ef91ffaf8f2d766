//! `hdrrdo`: metrics, BD-Rate, λ and chroma-offset search, campaigns.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use hdrrdo::campaign::{build_harness, run_campaign, write_reports, CampaignConfig, CampaignResult, ExternalSettings};
use hdrrdo::harness::{
    EncodeCache, EncodeSettings, ExternalAdapter, ExternalConfig, Harness, MockAdapter, MockClip, ALL_INTRA_PRESET,
    DEFAULT_PRESET, MOCK_ADAPTER_ID,
};
use hdrrdo::media::read_y4m_file;
use hdrrdo::metrics::{compute_all, Metric, MetricOptions};
use hdrrdo::optimizer::{
    offset_search_default, optimize_lambda, optimize_offsets, LambdaProblem, OffsetProblem, OptimizationTrace,
    SearchOptions,
};
use hdrrdo::rd::{bd_rate, read_csv, RdCurve, DEFAULT_QPS};

#[derive(Parser)]
#[command(name = "hdrrdo", version, about = "HDR rate-distortion optimisation toolkit")]
struct Cli {
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Persistent encode cache directory (defaults to $HDRRDO_CACHE).
    #[arg(long, global = true, value_name = "DIR")]
    cache: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score a test sequence against a reference.
    Metrics {
        reference: PathBuf,
        test: PathBuf,
        /// Comma-separated metric names, or `all`.
        #[arg(long, default_value = "all")]
        set: String,
        /// Include per-frame scores in JSON output.
        #[arg(long)]
        per_frame: bool,
    },
    /// BD-Rate of a test RD curve against an anchor (CSV: qp,bitrate_bps,quality,metric).
    Bdrate {
        anchor: PathBuf,
        test: PathBuf,
        /// Metric to compare when the files hold several.
        #[arg(long)]
        metric: Option<String>,
    },
    /// Tune (k1, k2) for one clip.
    Optimize {
        #[arg(long)]
        clip: String,
        #[arg(long)]
        metric: String,
        /// Encode with the default chroma qp offsets.
        #[arg(long)]
        chroma_offsets: bool,
        /// Maximum number of cost evaluations.
        #[arg(long, default_value_t = 100)]
        budget: usize,
        /// Comma-separated qp list.
        #[arg(long, value_delimiter = ',')]
        qps: Option<Vec<u8>>,
        /// External encoder settings (JSON); the mock codec is used otherwise.
        #[arg(long, value_name = "FILE")]
        external: Option<PathBuf>,
        /// Write the evaluation trace as JSON lines.
        #[arg(long, value_name = "FILE")]
        trace: Option<PathBuf>,
    },
    /// Tune the chroma offset line (k_offset, l_offset) over a corpus.
    OffsetSearch {
        /// Comma-separated clip ids.
        #[arg(long, value_delimiter = ',', required = true)]
        corpus: Vec<String>,
        #[arg(long, default_value_t = 100)]
        budget: usize,
        #[arg(long, value_delimiter = ',')]
        qps: Option<Vec<u8>>,
        #[arg(long, value_name = "FILE")]
        external: Option<PathBuf>,
    },
    /// Run or resume a campaign.
    Campaign {
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
    },
    /// Re-render reports from a campaign directory.
    Report {
        #[arg(long, value_name = "DIR")]
        result: PathBuf,
        /// Print the BD-Rate table.
        #[arg(long)]
        table: bool,
        /// Write the correlation heatmap and print its path.
        #[arg(long)]
        heatmap: bool,
    },
}

/// Error with the exit status it maps to.
struct Failure {
    status: u8,
    error: anyhow::Error,
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        status: 2,
        error: anyhow::anyhow!(msg.into()),
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            status: 1,
            error: e.into(),
        }
    }
}

fn parse_metrics(set: &str) -> Result<Vec<Metric>, Failure> {
    if set.eq_ignore_ascii_case("all") {
        return Ok(Metric::ALL.to_vec());
    }
    set.split(',')
        .map(|s| {
            s.trim()
                .parse::<Metric>()
                .map_err(|_| usage(format!("unknown metric {s:?}")))
        })
        .collect()
}

fn check_metric(name: &str) -> Result<String, Failure> {
    name.parse::<Metric>()
        .map(|m| m.name().to_string())
        .map_err(|_| usage(format!("unknown metric {name:?}")))
}

fn cache(cli_cache: &Option<PathBuf>) -> Result<EncodeCache> {
    Ok(match cli_cache {
        Some(dir) => EncodeCache::persistent(dir)?,
        None => EncodeCache::from_env()?,
    })
}

/// Harness with the mock adapter plus an optional external one.
fn harness(cli_cache: &Option<PathBuf>, external: &Option<PathBuf>) -> Result<(Harness, String)> {
    let mut h = Harness::new(cache(cli_cache)?);
    h.register(Arc::new(MockAdapter::builtin()))?;
    let mut adapter = MOCK_ADAPTER_ID.to_string();
    if let Some(path) = external {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let ext: ExternalSettings =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let work_dir = path.parent().unwrap_or(Path::new(".")).join("hdrrdo-encodes");
        adapter = "external".to_string();
        h.register(Arc::new(ExternalAdapter::new(ExternalConfig {
            id: adapter.clone(),
            encoder: ext.encoder,
            decoder: ext.decoder,
            clips: ext.clips,
            work_dir,
            timeout: Duration::from_secs(ext.timeout_secs),
        })?))?;
    }
    Ok((h, adapter))
}

fn print(json_mode: bool, value: &Value, text: impl FnOnce() -> String) {
    if json_mode {
        println!("{}", serde_json::to_string_pretty(value).expect("json value"));
    } else {
        print!("{}", text());
    }
}

fn cmd_metrics(json_mode: bool, reference: &Path, test: &Path, set: &str, per_frame: bool) -> Result<(), Failure> {
    let metrics = parse_metrics(set)?;
    let (_, r) = read_y4m_file(reference).with_context(|| format!("reading {}", reference.display()))?;
    let (_, t) = read_y4m_file(test).with_context(|| format!("reading {}", test.display()))?;
    let report = compute_all(&r, &t, &metrics, &MetricOptions::default())?;
    let mut obj = serde_json::Map::new();
    for m in &metrics {
        let e = report.get(*m).expect("requested metric present");
        let mut v = json!({ "aggregate": e.aggregate, "metadata": e.metadata });
        if per_frame {
            v["per_frame"] = json!(e.per_frame);
        }
        obj.insert(m.name().to_string(), v);
    }
    print(json_mode, &Value::Object(obj), || {
        metrics
            .iter()
            .map(|m| format!("{:<10} {:>10.4}\n", m.name(), report.aggregate(*m).unwrap_or(f64::NAN)))
            .collect()
    });
    Ok(())
}

fn load_curves(path: &Path, config: &str) -> Result<Vec<RdCurve>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let clip = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_csv(file, &clip, config).with_context(|| format!("reading {}", path.display()))
}

fn cmd_bdrate(json_mode: bool, anchor: &Path, test: &Path, metric: Option<&str>) -> Result<(), Failure> {
    let a = load_curves(anchor, "anchor")?;
    let t = load_curves(test, "test")?;
    let pick = |curves: &[RdCurve], which: &str| -> Result<RdCurve, Failure> {
        match metric {
            Some(m) => curves
                .iter()
                .find(|c| c.metric == m)
                .cloned()
                .ok_or_else(|| usage(format!("{which} has no rows for metric {m:?}"))),
            None if curves.len() == 1 => Ok(curves[0].clone()),
            None => Err(usage(format!("{which} holds several metrics; pass --metric"))),
        }
    };
    let (a, t) = (pick(&a, "anchor")?, pick(&t, "test")?);
    let r = bd_rate(&a, &t)?;
    let v = json!({
        "bd_rate": r.delta,
        "bd_rate_percent": r.percent(),
        "metric": a.metric,
        "overlap": r.overlap,
    });
    print(json_mode, &v, || {
        format!("BD-Rate ({}): {:+.3}%\n", a.metric, r.percent())
    });
    Ok(())
}

fn trace_summary(t: &OptimizationTrace) -> Value {
    json!({
        "evaluations": t.evaluations,
        "cycles": t.cycles,
        "reason": t.reason,
        "encodes": t.encodes,
        "encoder_invocations": t.encoder_invocations,
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_optimize(
    json_mode: bool,
    cli_cache: &Option<PathBuf>,
    clip: &str,
    metric: &str,
    chroma_offsets: bool,
    budget: usize,
    qps: Option<Vec<u8>>,
    external: &Option<PathBuf>,
    trace_path: Option<&Path>,
) -> Result<(), Failure> {
    let metric = check_metric(metric)?;
    if budget == 0 {
        return Err(usage("--budget must be at least 1"));
    }
    let (h, adapter) = harness(cli_cache, external)?;
    if external.is_none() && MockClip::builtin(clip).is_none() {
        return Err(usage(format!(
            "unknown mock clip {clip:?}; built-in clips are {}",
            MockClip::BUILTIN_IDS.join(", ")
        )));
    }
    let opts = SearchOptions {
        max_evaluations: budget,
        ..SearchOptions::lambda_default()
    };
    let problem = LambdaProblem {
        harness: &h,
        clip: clip.to_string(),
        metric: metric.clone(),
        qps: qps.unwrap_or_else(|| DEFAULT_QPS.to_vec()),
        settings: EncodeSettings {
            adapter,
            preset: DEFAULT_PRESET.to_string(),
            chroma: chroma_offsets.then(Default::default),
        },
        penalty: opts.penalty,
    };
    let o = optimize_lambda(&problem, &opts, &[])?;
    if let Some(p) = trace_path {
        std::fs::write(p, o.trace.to_json_lines()).with_context(|| format!("writing {}", p.display()))?;
    }
    let v = json!({
        "clip": o.clip,
        "metric": o.metric,
        "best_k": [o.best_k.0, o.best_k.1],
        "best_bd_rate": o.best_bd_rate,
        "trace": trace_summary(&o.trace),
    });
    print(json_mode, &v, || {
        format!(
            "{} / {}: k1={:.4} k2={:.4} BD-Rate {:+.3}% after {} evaluations ({:?})\n",
            o.clip,
            o.metric,
            o.best_k.0,
            o.best_k.1,
            o.best_bd_rate * 100.0,
            o.trace.evaluations,
            o.trace.reason
        )
    });
    Ok(())
}

fn cmd_offset_search(
    json_mode: bool,
    cli_cache: &Option<PathBuf>,
    corpus: Vec<String>,
    budget: usize,
    qps: Option<Vec<u8>>,
    external: &Option<PathBuf>,
) -> Result<(), Failure> {
    if budget == 0 {
        return Err(usage("--budget must be at least 1"));
    }
    let (h, adapter) = harness(cli_cache, external)?;
    let problem = OffsetProblem {
        harness: &h,
        clips: corpus,
        qps: qps.unwrap_or_else(|| DEFAULT_QPS.to_vec()),
        adapter,
        c: 1.0,
        penalty: 1.0,
    };
    let opts = SearchOptions {
        max_evaluations: budget,
        ..offset_search_default()
    };
    let default_cost = problem.cost(opts.start[0], opts.start[1])?;
    let o = optimize_offsets(&problem, &opts)?;
    let v = json!({
        "preset": ALL_INTRA_PRESET,
        "best": o.best,
        "best_cost": o.best_cost,
        "start_cost": default_cost,
        "trace": trace_summary(&o.trace),
    });
    print(json_mode, &v, || {
        format!(
            "k_offset={:.4} l_offset={:.4} cost {:+.3}% (start {:+.3}%) after {} evaluations\n",
            o.best.k_offset,
            o.best.l_offset,
            o.best_cost * 100.0,
            default_cost * 100.0,
            o.trace.evaluations
        )
    });
    Ok(())
}

fn cmd_campaign(json_mode: bool, cli_cache: &Option<PathBuf>, config: &Path) -> Result<(), Failure> {
    let cfg = CampaignConfig::from_file(config)?;
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let cache = match cli_cache {
        Some(_) => cache(cli_cache)?,
        None => match std::env::var_os(hdrrdo::harness::CACHE_ENV) {
            Some(_) => EncodeCache::from_env()?,
            None => EncodeCache::persistent(cfg.output_dir.join("cache"))?,
        },
    };
    let h = build_harness(&cfg, cache)?;
    let run = run_campaign(&cfg, &h)?;
    eprintln!(
        "campaign: {} new encodes, {} outcomes resumed, {} failures",
        run.new_encodes,
        run.resumed,
        run.result.failures.len()
    );
    let v = json!({
        "output_dir": cfg.output_dir,
        "complete": run.result.is_complete(),
        "failures": run.result.failures,
        "matrix": run.result.matrix,
    });
    print(json_mode, &v, || run.result.matrix.render_markdown());
    if run.result.is_complete() {
        Ok(())
    } else {
        Err(anyhow::anyhow!("{} clip/column runs failed", run.result.failures.len()).into())
    }
}

fn cmd_report(json_mode: bool, dir: &Path, table: bool, heatmap: bool) -> Result<(), Failure> {
    let result = CampaignResult::load(dir)?;
    write_reports(&result, dir)?;
    let corr = result.correlation();
    let (table, heatmap) = if table || heatmap {
        (table, heatmap)
    } else {
        (true, false)
    };
    let svg = dir.join("heatmap.svg");
    let v = json!({
        "matrix": result.matrix,
        "correlation": corr,
        "heatmap": svg,
    });
    print(json_mode, &v, || {
        let mut s = String::new();
        if table {
            s.push_str(&result.matrix.render_markdown());
        }
        if heatmap {
            s.push_str(&format!("{}\n", svg.display()));
        }
        s
    });
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let json_mode = cli.json;
    match cli.command {
        Command::Metrics {
            reference,
            test,
            set,
            per_frame,
        } => cmd_metrics(json_mode, &reference, &test, &set, per_frame),
        Command::Bdrate { anchor, test, metric } => cmd_bdrate(json_mode, &anchor, &test, metric.as_deref()),
        Command::Optimize {
            clip,
            metric,
            chroma_offsets,
            budget,
            qps,
            external,
            trace,
        } => cmd_optimize(
            json_mode,
            &cli.cache,
            &clip,
            &metric,
            chroma_offsets,
            budget,
            qps,
            &external,
            trace.as_deref(),
        ),
        Command::OffsetSearch {
            corpus,
            budget,
            qps,
            external,
        } => cmd_offset_search(json_mode, &cli.cache, corpus, budget, qps, &external),
        Command::Campaign { config } => cmd_campaign(json_mode, &cli.cache, &config),
        Command::Report { result, table, heatmap } => cmd_report(json_mode, &result, table, heatmap),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.status)
        }
    }
}
