//! Adapter that runs an external encoder (and optionally a decoder) through
//! argv templates. No shell is involved: each template element is one
//! argument after placeholder substitution.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};

use crate::media::Y4mReader;

use super::{DecodedOutput, EncodeResult, EncodeSpec, EncoderAdapter, HarnessError};

pub const ENCODER_PLACEHOLDERS: [&str; 7] = [
    "{input}",
    "{output}",
    "{qp}",
    "{k1}",
    "{k2}",
    "{cb_offset}",
    "{cr_offset}",
];
pub const DECODER_PLACEHOLDERS: [&str; 2] = ["{input}", "{output}"];

const STDERR_TAIL_BYTES: usize = 2048;

#[derive(Debug, Clone)]
pub struct ExternalConfig {
    pub id: String,
    pub encoder: Vec<String>,
    /// Turns the bitstream into a Y4M. Without it the encoder output is
    /// read as the decoded Y4M.
    pub decoder: Option<Vec<String>>,
    /// Clip id → reference Y4M.
    pub clips: BTreeMap<String, PathBuf>,
    pub work_dir: PathBuf,
    pub timeout: Duration,
}

#[derive(Debug)]
pub struct ExternalAdapter {
    cfg: ExternalConfig,
    frame_counts: Mutex<HashMap<String, (u64, f64)>>,
}

fn check_template(template: &[String], required: &[&str], what: &str) -> Result<(), HarnessError> {
    if template.is_empty() {
        return Err(HarnessError::Config(format!("{what} template is empty")));
    }
    let joined = template.join("\u{1f}");
    let missing: Vec<&str> = required.iter().copied().filter(|p| !joined.contains(p)).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(HarnessError::Config(format!(
            "{what} template is missing {}",
            missing.join(" ")
        )))
    }
}

fn substitute(template: &[String], vars: &[(&str, String)]) -> Vec<String> {
    template
        .iter()
        .map(|arg| {
            vars.iter()
                .fold(arg.clone(), |acc, (key, value)| acc.replace(key, value))
        })
        .collect()
}

fn tail(bytes: &[u8]) -> String {
    let start = bytes.len().saturating_sub(STDERR_TAIL_BYTES);
    String::from_utf8_lossy(&bytes[start..]).into_owned()
}

/// Runs `argv` with a deadline, returning captured stderr.
fn run(argv: &[String], timeout: Duration, stderr_path: &Path) -> Result<Vec<u8>, HarnessError> {
    let stderr_file = fs::File::create(stderr_path)?;
    let mut child = Command::new(&argv[0])
        .args(&argv[1..])
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(stderr_file)
        .spawn()
        .map_err(|e| HarnessError::Spawn {
            program: argv[0].clone(),
            source: e,
        })?;
    let start = Instant::now();
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if start.elapsed() >= timeout {
            let _ = child.kill();
            let _ = child.wait();
            let stderr = fs::read(stderr_path).unwrap_or_default();
            return Err(HarnessError::Timeout {
                program: argv[0].clone(),
                after_ms: timeout.as_millis() as u64,
                stderr_tail: tail(&stderr),
            });
        }
        std::thread::sleep(Duration::from_millis(5));
    };
    let stderr = fs::read(stderr_path).unwrap_or_default();
    if !status.success() {
        return Err(HarnessError::EncoderFailed {
            program: argv[0].clone(),
            status: status.code(),
            stderr_tail: tail(&stderr),
        });
    }
    Ok(stderr)
}

impl ExternalAdapter {
    /// Validates templates; the encoder template must use every placeholder.
    pub fn new(cfg: ExternalConfig) -> Result<Self, HarnessError> {
        check_template(&cfg.encoder, &ENCODER_PLACEHOLDERS, "encoder")?;
        if let Some(dec) = &cfg.decoder {
            check_template(dec, &DECODER_PLACEHOLDERS, "decoder")?;
        }
        if cfg.timeout.is_zero() {
            return Err(HarnessError::Config("timeout must be positive".into()));
        }
        fs::create_dir_all(&cfg.work_dir)?;
        Ok(ExternalAdapter {
            cfg,
            frame_counts: Mutex::new(HashMap::new()),
        })
    }

    /// Frame count and frame rate of a clip's reference, read once.
    fn clip_timing(&self, clip: &str, path: &Path) -> Result<(u64, f64), HarnessError> {
        if let Some(v) = self.frame_counts.lock().unwrap().get(clip) {
            return Ok(*v);
        }
        let file = fs::File::open(path)?;
        let mut reader = Y4mReader::new(std::io::BufReader::new(file))?;
        let fps = reader.info().fps();
        let mut frames = 0u64;
        while reader.read_frame()?.is_some() {
            frames += 1;
        }
        if frames == 0 {
            return Err(HarnessError::Config(format!("clip {clip} has no frames")));
        }
        self.frame_counts
            .lock()
            .unwrap()
            .insert(clip.to_string(), (frames, fps));
        Ok((frames, fps))
    }
}

impl EncoderAdapter for ExternalAdapter {
    fn id(&self) -> &str {
        &self.cfg.id
    }

    fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for arg in &self.cfg.encoder {
            h.update(arg.as_bytes());
            h.update([0u8]);
        }
        h.update([1u8]);
        for arg in self.cfg.decoder.iter().flatten() {
            h.update(arg.as_bytes());
            h.update([0u8]);
        }
        for (id, path) in &self.cfg.clips {
            h.update(id.as_bytes());
            h.update([0u8]);
            h.update(path.to_string_lossy().as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }

    fn reference(&self, clip: &str) -> Option<PathBuf> {
        self.cfg.clips.get(clip).cloned()
    }

    fn encode(&self, spec: &EncodeSpec) -> Result<EncodeResult, HarnessError> {
        let input = self
            .cfg
            .clips
            .get(&spec.clip)
            .ok_or_else(|| HarnessError::UnknownClip(spec.clip.clone()))?;
        let (frames, fps) = self.clip_timing(&spec.clip, input)?;
        let stem = spec.digest(&self.fingerprint());
        let bitstream = self.cfg.work_dir.join(format!("{stem}.bin"));
        let (cb, cr) = spec.chroma.map_or((0, 0), |p| p.offsets(spec.qp));
        let vars = [
            ("{input}", input.to_string_lossy().into_owned()),
            ("{output}", bitstream.to_string_lossy().into_owned()),
            ("{qp}", spec.qp.to_string()),
            ("{k1}", spec.k1.to_string()),
            ("{k2}", spec.k2.to_string()),
            ("{cb_offset}", cb.to_string()),
            ("{cr_offset}", cr.to_string()),
            ("{preset}", spec.preset.clone()),
        ];
        let start = Instant::now();
        let mut log = run(
            &substitute(&self.cfg.encoder, &vars),
            self.cfg.timeout,
            &self.cfg.work_dir.join(format!("{stem}.enc.log")),
        )?;
        let size = match fs::metadata(&bitstream) {
            Ok(m) if m.len() > 0 => m.len(),
            _ => return Err(HarnessError::MissingOutput(bitstream)),
        };
        let decoded = match &self.cfg.decoder {
            None => bitstream.clone(),
            Some(template) => {
                let out = self.cfg.work_dir.join(format!("{stem}.y4m"));
                let dec_vars = [
                    ("{input}", bitstream.to_string_lossy().into_owned()),
                    ("{output}", out.to_string_lossy().into_owned()),
                ];
                log.extend(run(
                    &substitute(template, &dec_vars),
                    self.cfg.timeout,
                    &self.cfg.work_dir.join(format!("{stem}.dec.log")),
                )?);
                if !out.exists() {
                    return Err(HarnessError::MissingOutput(out));
                }
                out
            }
        };
        // Sanity check that the decoded file is a readable Y4M.
        let mut head = [0u8; 10];
        fs::File::open(&decoded)?
            .read_exact(&mut head)
            .map_err(|_| HarnessError::MissingOutput(decoded.clone()))?;
        Ok(EncodeResult {
            bitrate_bps: size as f64 * 8.0 * fps / frames as f64,
            frames,
            wall_ms: start.elapsed().as_millis() as u64,
            adapter: self.cfg.id.clone(),
            spec_digest: String::new(),
            log_digest: hex::encode(Sha256::digest(&log)),
            output: DecodedOutput::File { path: decoded },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(encoder: &[&str]) -> ExternalConfig {
        ExternalConfig {
            id: "ext".into(),
            encoder: encoder.iter().map(|s| s.to_string()).collect(),
            decoder: None,
            clips: BTreeMap::new(),
            work_dir: std::env::temp_dir().join("hdrrdo-ext-unit"),
            timeout: Duration::from_secs(5),
        }
    }

    #[test]
    fn missing_qp_is_rejected() {
        let err = ExternalAdapter::new(cfg(&[
            "enc",
            "{input}",
            "{output}",
            "{k1}",
            "{k2}",
            "{cb_offset}",
            "{cr_offset}",
        ]))
        .unwrap_err();
        assert!(err.to_string().contains("{qp}"));
    }

    #[test]
    fn placeholders_may_be_embedded() {
        ExternalAdapter::new(cfg(&[
            "enc",
            "--in={input}",
            "-o",
            "{output}",
            "--q={qp}",
            "--k={k1},{k2}",
            "--co={cb_offset}:{cr_offset}",
        ]))
        .unwrap();
    }

    #[test]
    fn substitution() {
        let out = substitute(
            &["--k={k1},{k2}".to_string()],
            &[("{k1}", "1.3".into()), ("{k2}", "1.6".into())],
        );
        assert_eq!(out, vec!["--k=1.3,1.6"]);
    }
}
