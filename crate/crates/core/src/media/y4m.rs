//! YUV4MPEG2 stream parsing and emission.
//!
//! Header: `YUV4MPEG2` followed by space-separated `W`, `H`, `F`, `I`, `A`,
//! `C` and `X` parameters, terminated by `\n`. Each frame is a `FRAME` line
//! followed by the planar Y, Cb, Cr payload. Samples above 8 bits are stored
//! as little-endian 16-bit words.
//!
//! Colour description travels in two `X` parameters: `XCOLORRANGE=LIMITED|FULL`
//! (the ffmpeg convention) and `XCOLOUR=<primaries>,<transfer>,<matrix>`.
//! Any other `X` parameter is carried through untouched.

use std::io::{BufRead, Read, Write};
use std::sync::Arc;

use log::warn;

use super::frame::{
    ColourTags, MatrixCoefficients, PlanarFrame, Plane, Primaries, SampleRange, StreamInfo, Subsampling, Transfer,
};
use super::MediaError;

const MAGIC: &[u8] = b"YUV4MPEG2";
const FRAME_MARKER: &[u8] = b"FRAME";

/// Parses a stream header. Returns the stream description and the byte
/// offset of the first `FRAME` marker (one past the header's newline).
pub fn parse_y4m_header(bytes: &[u8]) -> Result<(StreamInfo, usize), MediaError> {
    if !bytes.starts_with(MAGIC) {
        return Err(MediaError::MissingMagic);
    }
    let end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or(MediaError::Truncated("header has no terminating newline"))?;
    let line = std::str::from_utf8(&bytes[MAGIC.len()..end])
        .map_err(|_| MediaError::Malformed("header is not ASCII".into()))?;
    let info = parse_params(line)?;
    Ok((info, end + 1))
}

fn parse_params(line: &str) -> Result<StreamInfo, MediaError> {
    let mut width = None;
    let mut height = None;
    let mut fps = None;
    let mut interlace = 'p';
    let mut aspect = None;
    let mut layout = (Subsampling::Cs420, 8u8);
    let mut colour: Option<(Primaries, Transfer, MatrixCoefficients)> = None;
    let mut range = SampleRange::Limited;
    let mut extra_tags = Vec::new();

    for token in line.split(' ').filter(|t| !t.is_empty()) {
        let (key, value) = token.split_at(1);
        match key {
            "W" => width = Some(parse_dim(value, "W")?),
            "H" => height = Some(parse_dim(value, "H")?),
            "F" => fps = Some(parse_ratio(value)?),
            "I" => {
                interlace = value
                    .chars()
                    .next()
                    .ok_or_else(|| MediaError::Malformed("empty interlace token".into()))?
            }
            "A" => aspect = Some(parse_ratio(value)?),
            "C" => layout = parse_colourspace(value)?,
            "X" => {
                if let Some(v) = value.strip_prefix("COLORRANGE=") {
                    range = match v {
                        "LIMITED" => SampleRange::Limited,
                        "FULL" => SampleRange::Full,
                        _ => return Err(MediaError::Malformed(format!("colour range {v}"))),
                    };
                } else if let Some(v) = value.strip_prefix("COLOUR=") {
                    colour = Some(parse_colour_triplet(v));
                } else {
                    extra_tags.push(token.to_string());
                }
            }
            _ => extra_tags.push(token.to_string()),
        }
    }

    let (fps_num, fps_den) = fps.ok_or(MediaError::MissingParameter('F'))?;
    let (subsampling, bit_depth) = layout;
    let mut tags = ColourTags::default_for_depth(bit_depth);
    if let Some((primaries, transfer, matrix)) = colour {
        tags.primaries = primaries;
        tags.transfer = transfer;
        tags.matrix = matrix;
    }
    tags.range = range;
    let info = StreamInfo {
        width: width.ok_or(MediaError::MissingParameter('W'))?,
        height: height.ok_or(MediaError::MissingParameter('H'))?,
        fps_num,
        fps_den,
        bit_depth,
        subsampling,
        colour: tags,
        interlace,
        aspect,
        extra_tags,
    };
    info.validate()?;
    Ok(info)
}

fn parse_dim(value: &str, name: &str) -> Result<usize, MediaError> {
    value
        .parse::<usize>()
        .map_err(|_| MediaError::Malformed(format!("{name}{value}")))
}

fn parse_ratio(value: &str) -> Result<(u32, u32), MediaError> {
    let bad = || MediaError::MalformedRational(value.to_string());
    let (num, den) = value.split_once(':').ok_or_else(bad)?;
    let num = num.parse::<u32>().map_err(|_| bad())?;
    let den = den.parse::<u32>().map_err(|_| bad())?;
    Ok((num, den))
}

fn parse_colourspace(value: &str) -> Result<(Subsampling, u8), MediaError> {
    match value {
        "420" | "420jpeg" | "420paldv" | "420mpeg2" => Ok((Subsampling::Cs420, 8)),
        "420p10" => Ok((Subsampling::Cs420, 10)),
        "444" => Ok((Subsampling::Cs444, 8)),
        "444p10" => Ok((Subsampling::Cs444, 10)),
        other => Err(MediaError::UnsupportedColourspace(other.to_string())),
    }
}

fn colourspace_token(info: &StreamInfo) -> &'static str {
    match (info.subsampling, info.bit_depth) {
        (Subsampling::Cs420, 8) => "420jpeg",
        (Subsampling::Cs420, _) => "420p10",
        (Subsampling::Cs444, 8) => "444",
        (Subsampling::Cs444, _) => "444p10",
    }
}

fn parse_colour_triplet(value: &str) -> (Primaries, Transfer, MatrixCoefficients) {
    let mut parts = value.split(',');
    let primaries = match parts.next() {
        Some("bt709") => Primaries::Bt709,
        Some("bt2020") => Primaries::Bt2020,
        _ => Primaries::Unspecified,
    };
    let transfer = match parts.next() {
        Some("pq") => Transfer::Pq,
        Some("gamma") => Transfer::Gamma,
        _ => Transfer::Unspecified,
    };
    let matrix = match parts.next() {
        Some("bt709") => MatrixCoefficients::Bt709,
        Some("bt2020nc") => MatrixCoefficients::Bt2020Ncl,
        _ => MatrixCoefficients::Unspecified,
    };
    (primaries, transfer, matrix)
}

fn colour_triplet_token(tags: &ColourTags) -> String {
    let primaries = match tags.primaries {
        Primaries::Bt709 => "bt709",
        Primaries::Bt2020 => "bt2020",
        Primaries::Unspecified => "unspecified",
    };
    let transfer = match tags.transfer {
        Transfer::Gamma => "gamma",
        Transfer::Pq => "pq",
        Transfer::Unspecified => "unspecified",
    };
    let matrix = match tags.matrix {
        MatrixCoefficients::Bt709 => "bt709",
        MatrixCoefficients::Bt2020Ncl => "bt2020nc",
        MatrixCoefficients::Unspecified => "unspecified",
    };
    format!("{primaries},{transfer},{matrix}")
}

/// Renders the header line (including the trailing newline) for `info`.
pub fn header_line(info: &StreamInfo) -> String {
    let mut line = format!(
        "YUV4MPEG2 W{} H{} F{}:{} I{}",
        info.width, info.height, info.fps_num, info.fps_den, info.interlace
    );
    if let Some((n, d)) = info.aspect {
        line.push_str(&format!(" A{n}:{d}"));
    }
    line.push_str(&format!(" C{}", colourspace_token(info)));
    let range = match info.colour.range {
        SampleRange::Limited => "LIMITED",
        SampleRange::Full => "FULL",
    };
    line.push_str(&format!(" XCOLORRANGE={range}"));
    line.push_str(&format!(" XCOLOUR={}", colour_triplet_token(&info.colour)));
    for tag in &info.extra_tags {
        line.push(' ');
        line.push_str(tag);
    }
    line.push('\n');
    line
}

/// Sequential frame reader over a Y4M byte stream.
pub struct Y4mReader<R> {
    inner: R,
    info: Arc<StreamInfo>,
    corrupt_samples: u64,
    frames_read: usize,
}

impl<R: BufRead> Y4mReader<R> {
    /// Reads and parses the stream header.
    pub fn new(mut inner: R) -> Result<Self, MediaError> {
        let mut header = Vec::new();
        inner.read_until(b'\n', &mut header)?;
        let (info, _) = parse_y4m_header(&header)?;
        Ok(Y4mReader {
            inner,
            info: Arc::new(info),
            corrupt_samples: 0,
            frames_read: 0,
        })
    }

    pub fn info(&self) -> &Arc<StreamInfo> {
        &self.info
    }

    /// Number of out-of-range samples clamped so far.
    pub fn corrupt_samples(&self) -> u64 {
        self.corrupt_samples
    }

    /// Reads the next frame; `Ok(None)` at a clean end of stream.
    pub fn read_frame(&mut self) -> Result<Option<PlanarFrame>, MediaError> {
        let mut marker = Vec::new();
        let n = self.inner.read_until(b'\n', &mut marker)?;
        if n == 0 {
            return Ok(None);
        }
        if !marker.starts_with(FRAME_MARKER) {
            return Err(MediaError::Malformed(format!(
                "expected FRAME marker before frame {}",
                self.frames_read
            )));
        }
        if marker.last() != Some(&b'\n') {
            return Err(MediaError::Truncated("FRAME marker"));
        }

        let mut payload = vec![0u8; self.info.frame_bytes()];
        read_full(&mut self.inner, &mut payload)?;

        let info = Arc::clone(&self.info);
        let (cw, ch) = info.chroma_dims();
        let mut cursor = 0usize;
        let y = self.take_plane(&payload, &mut cursor, info.width, info.height);
        let cb = self.take_plane(&payload, &mut cursor, cw, ch);
        let cr = self.take_plane(&payload, &mut cursor, cw, ch);
        self.frames_read += 1;
        Ok(Some(PlanarFrame { y, cb, cr, info }))
    }

    /// Reads all remaining frames.
    pub fn read_all(&mut self) -> Result<Vec<PlanarFrame>, MediaError> {
        let mut frames = Vec::new();
        while let Some(f) = self.read_frame()? {
            frames.push(f);
        }
        Ok(frames)
    }

    fn take_plane(&mut self, payload: &[u8], cursor: &mut usize, w: usize, h: usize) -> Plane {
        let n = w * h;
        let data = if self.info.bit_depth > 8 {
            let max = self.info.max_sample();
            let bytes = &payload[*cursor..*cursor + 2 * n];
            *cursor += 2 * n;
            let mut clamped = 0u64;
            let data: Vec<u16> = bytes
                .chunks_exact(2)
                .map(|c| {
                    let v = u16::from_le_bytes([c[0], c[1]]);
                    if v > max {
                        clamped += 1;
                        max
                    } else {
                        v
                    }
                })
                .collect();
            if clamped > 0 {
                warn!(
                    "frame {}: {clamped} corrupt sample(s) above {max}, clamped",
                    self.frames_read
                );
                self.corrupt_samples += clamped;
            }
            data
        } else {
            let bytes = &payload[*cursor..*cursor + n];
            *cursor += n;
            bytes.iter().map(|&b| u16::from(b)).collect()
        };
        Plane::new(w, h, data)
    }
}

fn read_full<R: Read>(reader: &mut R, buf: &mut [u8]) -> Result<(), MediaError> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => return Err(MediaError::Truncated("frame payload")),
            Ok(k) => filled += k,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

/// Parses a complete in-memory stream.
pub fn read_y4m(bytes: &[u8]) -> Result<(Arc<StreamInfo>, Vec<PlanarFrame>), MediaError> {
    let mut reader = Y4mReader::new(bytes)?;
    let frames = reader.read_all()?;
    Ok((Arc::clone(reader.info()), frames))
}

/// Reads a Y4M file from disk.
pub fn read_y4m_file(path: impl AsRef<std::path::Path>) -> Result<(Arc<StreamInfo>, Vec<PlanarFrame>), MediaError> {
    let file = std::fs::File::open(path)?;
    let mut reader = Y4mReader::new(std::io::BufReader::new(file))?;
    let frames = reader.read_all()?;
    Ok((Arc::clone(reader.info()), frames))
}

/// Writes `frames` as a Y4M stream described by `info`. Returns bytes written.
pub fn write_y4m<W: Write>(frames: &[PlanarFrame], info: &StreamInfo, sink: &mut W) -> Result<u64, MediaError> {
    info.validate()?;
    for (i, frame) in frames.iter().enumerate() {
        if *frame.info != *info {
            return Err(MediaError::Inconsistent(format!(
                "frame {i} stream info differs from the stream header"
            )));
        }
        frame.check()?;
    }

    let header = header_line(info);
    sink.write_all(header.as_bytes())?;
    let mut written = header.len() as u64;
    let mut buf = Vec::with_capacity(info.frame_bytes());
    for frame in frames {
        sink.write_all(b"FRAME\n")?;
        written += 6;
        buf.clear();
        for plane in frame.planes() {
            if info.bit_depth > 8 {
                for &v in &plane.data {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            } else {
                buf.extend(plane.data.iter().map(|&v| v as u8));
            }
        }
        sink.write_all(&buf)?;
        written += buf.len() as u64;
    }
    sink.flush()?;
    Ok(written)
}

/// Writes a Y4M file to disk.
pub fn write_y4m_file(
    path: impl AsRef<std::path::Path>,
    frames: &[PlanarFrame],
    info: &StreamInfo,
) -> Result<u64, MediaError> {
    let file = std::fs::File::create(path)?;
    let mut sink = std::io::BufWriter::new(file);
    write_y4m(frames, info, &mut sink)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_hdr_header() {
        let (info, offset) = parse_y4m_header(b"YUV4MPEG2 W1920 H1080 F24:1 Ip A1:1 C420p10\nFRAME\n").unwrap();
        assert_eq!((info.width, info.height), (1920, 1080));
        assert_eq!((info.fps_num, info.fps_den), (24, 1));
        assert_eq!(info.bit_depth, 10);
        assert_eq!(info.subsampling, Subsampling::Cs420);
        assert_eq!(info.aspect, Some((1, 1)));
        assert_eq!(info.colour, ColourTags::BT2020_PQ);
        assert_eq!(offset, 44);
    }

    #[test]
    fn parses_minimal_444_header() {
        let (info, _) = parse_y4m_header(b"YUV4MPEG2 W2 H2 F1:1 C444\n").unwrap();
        assert_eq!((info.width, info.height), (2, 2));
        assert_eq!((info.fps_num, info.fps_den), (1, 1));
        assert_eq!(info.bit_depth, 8);
        assert_eq!(info.subsampling, Subsampling::Cs444);
    }

    #[test]
    fn header_errors() {
        assert!(matches!(
            parse_y4m_header(b"JUNK W2 H2\n"),
            Err(MediaError::MissingMagic)
        ));
        assert!(matches!(
            parse_y4m_header(b"YUV4MPEG2 W2 H2 F1:1 C422\n"),
            Err(MediaError::UnsupportedColourspace(_))
        ));
        assert!(matches!(
            parse_y4m_header(b"YUV4MPEG2 W2 H2 F25\n"),
            Err(MediaError::MalformedRational(_))
        ));
        assert!(matches!(
            parse_y4m_header(b"YUV4MPEG2 W2 H2 F25:0\n"),
            Err(MediaError::InvalidInfo(_))
        ));
        assert!(matches!(
            parse_y4m_header(b"YUV4MPEG2 W0 H2 F25:1\n"),
            Err(MediaError::InvalidInfo(_))
        ));
    }

    #[test]
    fn unknown_parameters_are_preserved() {
        let (info, _) = parse_y4m_header(b"YUV4MPEG2 W4 H2 F30000:1001 C420p10 XYSCSS=420P10 XFOO=bar\n").unwrap();
        assert_eq!(info.extra_tags, vec!["XYSCSS=420P10", "XFOO=bar"]);
        let line = header_line(&info);
        assert!(line.ends_with("XYSCSS=420P10 XFOO=bar\n"));
    }

    #[test]
    fn constant_444_frame() {
        let mut bytes = b"YUV4MPEG2 W2 H2 F1:1 C444\nFRAME\n".to_vec();
        bytes.extend(std::iter::repeat_n(0x80, 12));
        let (_, frames) = read_y4m(&bytes).unwrap();
        assert_eq!(frames.len(), 1);
        for plane in frames[0].planes() {
            assert!(plane.data.iter().all(|&v| v == 128));
        }
    }

    #[test]
    fn truncated_frame_is_an_error() {
        let mut bytes = b"YUV4MPEG2 W2 H2 F1:1 C444\nFRAME\n".to_vec();
        bytes.extend(std::iter::repeat_n(0x80, 7));
        assert!(matches!(read_y4m(&bytes), Err(MediaError::Truncated(_))));
    }

    #[test]
    fn ten_bit_samples_clamp_with_warning() {
        let mut bytes = b"YUV4MPEG2 W1 H1 F1:1 C444p10\nFRAME\n".to_vec();
        bytes.extend_from_slice(&0x03FFu16.to_le_bytes());
        bytes.extend_from_slice(&0x0400u16.to_le_bytes());
        bytes.extend_from_slice(&0x0200u16.to_le_bytes());
        let mut reader = Y4mReader::new(&bytes[..]).unwrap();
        let frame = reader.read_frame().unwrap().unwrap();
        assert_eq!(frame.y.data, vec![1023]);
        assert_eq!(frame.cb.data, vec![1023]);
        assert_eq!(frame.cr.data, vec![512]);
        assert_eq!(reader.corrupt_samples(), 1);
    }

    #[test]
    fn empty_stream_round_trip() {
        let info = StreamInfo::new(4, 4, 10, Subsampling::Cs420);
        let mut out = Vec::new();
        let n = write_y4m(&[], &info, &mut out).unwrap();
        assert_eq!(n as usize, out.len());
        let (parsed, frames) = read_y4m(&out).unwrap();
        assert_eq!(*parsed, info);
        assert!(frames.is_empty());
    }

    #[test]
    fn mismatched_frame_is_rejected() {
        let info = Arc::new(StreamInfo::new(4, 4, 10, Subsampling::Cs420));
        let other = Arc::new(StreamInfo::new(6, 4, 10, Subsampling::Cs420));
        let frames = vec![
            PlanarFrame::constant(Arc::clone(&info), 64, 512, 512),
            PlanarFrame::constant(other, 64, 512, 512),
        ];
        let err = write_y4m(&frames, &info, &mut Vec::new()).unwrap_err();
        assert!(matches!(err, MediaError::Inconsistent(_)));
    }
}
