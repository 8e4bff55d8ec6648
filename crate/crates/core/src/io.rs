//! File formats: detections and tracks as line-oriented text, intrinsics as
//! TOML, rasters as a small little-endian binary container, truth sidecars
//! and results as JSON.
//!
//! Detection file:
//!
//! ```text
//! #detections v1 kernel_dim=<D>
//! <seq> <frame> <u> <v> <depth> <category> <score> <k1> .. <kD>
//! <seq> <frame>
//! ```
//!
//! The two-field form marks a frame without detections. Blank lines and
//! lines starting with `#` after the header are ignored. Reals are written
//! in shortest round-trip decimal, so text round trips are exact.
//!
//! Track file: header `#tracks v1`, then `<seq> <frame> <det_idx> <track_id>`.
//!
//! Raster container (`UPRS`), all integers little-endian:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `UPRS`                            |
//! | 4      | 2    | version, 1                              |
//! | 6      | 1    | kind: 1 panoptic, 2 depth               |
//! | 7      | 4    | width                                   |
//! | 11     | 4    | height                                  |
//! | 15     | 4·wh | row-major pixels                        |
//!
//! Panoptic pixels are `u32` values `class << 16 | instance`; class
//! `0xFFFF` is VOID. Depth pixels are IEEE-754 `f32`; invalid pixels are
//! stored as NaN.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depthops::DepthMap;
use crate::geometry::CameraIntrinsics;
use crate::metrics::{Frame, PanopticMap, Sequence};
use crate::simulator::{GroundTruthTrack, ScenarioConfig};
use crate::tracker::{Detection, TrackId};

pub const RASTER_MAGIC: &[u8; 4] = b"UPRS";
pub const RASTER_VERSION: u16 = 1;
pub const RASTER_HEADER_LEN: usize = 15;

const DETECTIONS_HEADER: &str = "#detections v1";
const TRACKS_HEADER: &str = "#tracks v1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: kernel has {found} values, header declares {expected}")]
    DimMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("not a raster container")]
    BadMagic,
    #[error("unsupported raster version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown raster kind {0}")]
    UnknownKind(u8),
    #[error("raster payload has {found} bytes, expected {expected}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("instance id {0} does not fit in 16 bits")]
    InstanceOverflow(u32),
    #[error("invalid intrinsics: {0}")]
    Intrinsics(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Layout(String),
}

fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, IoError> {
    fs::read(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    fs::write(path, bytes).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_error(line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse {
        line,
        message: message.into(),
    }
}

fn field<T: std::str::FromStr>(token: &str, line: usize, name: &str) -> Result<T, IoError> {
    token
        .parse()
        .map_err(|_| parse_error(line, format!("cannot parse {name} from {token:?}")))
}

/// Detections of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDetections {
    pub frame: u64,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSequence {
    pub id: String,
    pub frames: Vec<FrameDetections>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionFile {
    pub kernel_dim: usize,
    pub sequences: Vec<DetectionSequence>,
}

impl DetectionFile {
    pub fn new(kernel_dim: usize) -> Self {
        Self {
            kernel_dim,
            sequences: Vec::new(),
        }
    }

    pub fn frame_count(&self) -> usize {
        self.sequences.iter().map(|s| s.frames.len()).sum()
    }
}

fn check_sequence_id(id: &str) -> Result<(), IoError> {
    if id.is_empty() || id.starts_with('#') || id.chars().any(char::is_whitespace) {
        return Err(IoError::Layout(format!(
            "sequence id {id:?} must be non-empty, free of whitespace and not start with '#'"
        )));
    }
    Ok(())
}

pub fn format_detections(file: &DetectionFile) -> Result<String, IoError> {
    let mut out = format!("{DETECTIONS_HEADER} kernel_dim={}\n", file.kernel_dim);
    for seq in &file.sequences {
        check_sequence_id(&seq.id)?;
        for fr in &seq.frames {
            if fr.detections.is_empty() {
                writeln!(out, "{} {}", seq.id, fr.frame).unwrap();
            }
            for d in &fr.detections {
                if d.kernel.len() != file.kernel_dim {
                    return Err(IoError::Layout(format!(
                        "sequence {} frame {}: kernel has {} values, file declares {}",
                        seq.id,
                        fr.frame,
                        d.kernel.len(),
                        file.kernel_dim
                    )));
                }
                write!(
                    out,
                    "{} {} {} {} {} {} {}",
                    seq.id, fr.frame, d.center.0, d.center.1, d.mean_depth, d.category, d.score
                )
                .unwrap();
                for k in &d.kernel {
                    write!(out, " {k}").unwrap();
                }
                out.push('\n');
            }
        }
    }
    Ok(out)
}

pub fn parse_detections(text: &str) -> Result<DetectionFile, IoError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_error(1, "missing header"))?;
    let dim_token = header
        .strip_prefix(DETECTIONS_HEADER)
        .and_then(|rest| rest.trim().strip_prefix("kernel_dim="))
        .ok_or_else(|| parse_error(1, format!("expected '{DETECTIONS_HEADER} kernel_dim=<D>'")))?;
    let kernel_dim: usize = field(dim_token, 1, "kernel_dim")?;

    let mut file = DetectionFile::new(kernel_dim);
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for (no, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 2 && tokens.len() < 7 {
            return Err(parse_error(
                no,
                format!("expected 2 or at least 7 fields, found {}", tokens.len()),
            ));
        }
        let seq_id = tokens[0];
        let frame: u64 = field(tokens[1], no, "frame")?;
        let slot = *index.entry(seq_id.to_string()).or_insert_with(|| {
            file.sequences.push(DetectionSequence {
                id: seq_id.to_string(),
                frames: Vec::new(),
            });
            file.sequences.len() - 1
        });
        let seq = &mut file.sequences[slot];
        match seq.frames.last() {
            Some(last) if last.frame > frame => {
                return Err(parse_error(
                    no,
                    format!("frame {frame} follows frame {} in sequence {seq_id}", last.frame),
                ))
            }
            Some(last) if last.frame == frame => {}
            _ => seq.frames.push(FrameDetections {
                frame,
                detections: Vec::new(),
            }),
        }
        if tokens.len() == 2 {
            continue;
        }
        let kernel = &tokens[7..];
        if kernel.len() != kernel_dim {
            return Err(IoError::DimMismatch {
                line: no,
                expected: kernel_dim,
                found: kernel.len(),
            });
        }
        let det = Detection {
            center: (field(tokens[2], no, "u")?, field(tokens[3], no, "v")?),
            mean_depth: field(tokens[4], no, "depth")?,
            category: field(tokens[5], no, "category")?,
            score: field(tokens[6], no, "score")?,
            kernel: kernel
                .iter()
                .map(|t| field(t, no, "kernel value"))
                .collect::<Result<_, _>>()?,
        };
        seq.frames.last_mut().unwrap().detections.push(det);
    }
    Ok(file)
}

pub fn read_detections(path: &Path) -> Result<DetectionFile, IoError> {
    parse_detections(&read_text(path)?)
}

pub fn write_detections(path: &Path, file: &DetectionFile) -> Result<(), IoError> {
    write_file(path, format_detections(file)?.as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct TrackRecord {
    pub frame: u64,
    pub detection: usize,
    pub track_id: TrackId,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackFile {
    /// Records per sequence, in file order.
    pub sequences: Vec<(String, Vec<TrackRecord>)>,
}

pub fn format_tracks(file: &TrackFile) -> Result<String, IoError> {
    let mut out = format!("{TRACKS_HEADER}\n");
    for (id, records) in &file.sequences {
        check_sequence_id(id)?;
        for r in records {
            writeln!(out, "{id} {} {} {}", r.frame, r.detection, r.track_id).unwrap();
        }
    }
    Ok(out)
}

pub fn parse_tracks(text: &str) -> Result<TrackFile, IoError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, h)) if h.trim() == TRACKS_HEADER => {}
        _ => return Err(parse_error(1, format!("expected '{TRACKS_HEADER}'"))),
    }
    let mut file = TrackFile::default();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut seen: HashSet<(usize, u64, usize)> = HashSet::new();
    for (no, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 4 {
            return Err(parse_error(no, format!("expected 4 fields, found {}", tokens.len())));
        }
        let record = TrackRecord {
            frame: field(tokens[1], no, "frame")?,
            detection: field(tokens[2], no, "detection index")?,
            track_id: TrackId(field(tokens[3], no, "track id")?),
        };
        if record.track_id.0 == 0 {
            return Err(parse_error(no, "track ids start at 1"));
        }
        let slot = *index.entry(tokens[0].to_string()).or_insert_with(|| {
            file.sequences.push((tokens[0].to_string(), Vec::new()));
            file.sequences.len() - 1
        });
        if !seen.insert((slot, record.frame, record.detection)) {
            return Err(parse_error(
                no,
                format!("duplicate record for frame {} detection {}", record.frame, record.detection),
            ));
        }
        file.sequences[slot].1.push(record);
    }
    Ok(file)
}

pub fn read_tracks(path: &Path) -> Result<TrackFile, IoError> {
    parse_tracks(&read_text(path)?)
}

pub fn write_tracks(path: &Path, file: &TrackFile) -> Result<(), IoError> {
    write_file(path, format_tracks(file)?.as_bytes())
}

/// Intrinsics as TOML `key = value` pairs: fx, fy, cx, cy, width, height.
pub fn parse_intrinsics(text: &str) -> Result<CameraIntrinsics, IoError> {
    let intrinsics: CameraIntrinsics =
        toml::from_str(text).map_err(|e| IoError::Intrinsics(e.to_string()))?;
    intrinsics
        .validate()
        .map_err(|e| IoError::Intrinsics(e.to_string()))?;
    Ok(intrinsics)
}

pub fn format_intrinsics(intrinsics: &CameraIntrinsics) -> String {
    toml::to_string(intrinsics).expect("intrinsics serialize to toml")
}

pub fn read_intrinsics(path: &Path) -> Result<CameraIntrinsics, IoError> {
    parse_intrinsics(&read_text(path)?)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Raster {
    Panoptic(PanopticMap),
    Depth(DepthMap),
}

pub fn encode_raster(raster: &Raster) -> Result<Vec<u8>, IoError> {
    let (kind, width, height) = match raster {
        Raster::Panoptic(m) => (1u8, m.width, m.height),
        Raster::Depth(d) => (2u8, d.width, d.height),
    };
    let mut out = Vec::with_capacity(RASTER_HEADER_LEN + 4 * width * height);
    out.extend_from_slice(RASTER_MAGIC);
    out.extend_from_slice(&RASTER_VERSION.to_le_bytes());
    out.push(kind);
    for dim in [width, height] {
        let dim = u32::try_from(dim).map_err(|_| IoError::Layout(format!("dimension {dim} too large")))?;
        out.extend_from_slice(&dim.to_le_bytes());
    }
    match raster {
        Raster::Panoptic(m) => {
            for (&c, &i) in m.semantic.iter().zip(&m.instance) {
                if i > 0xFFFF {
                    return Err(IoError::InstanceOverflow(i));
                }
                out.extend_from_slice(&(((c as u32) << 16) | i).to_le_bytes());
            }
        }
        Raster::Depth(d) => {
            for (&v, &ok) in d.values.iter().zip(&d.valid) {
                let v = if ok { v as f32 } else { f32::NAN };
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode_raster(bytes: &[u8]) -> Result<Raster, IoError> {
    if bytes.len() < 4 || &bytes[..4] != RASTER_MAGIC {
        return Err(IoError::BadMagic);
    }
    if bytes.len() < RASTER_HEADER_LEN {
        return Err(IoError::TruncatedPayload {
            expected: RASTER_HEADER_LEN,
            found: bytes.len(),
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != RASTER_VERSION {
        return Err(IoError::UnsupportedVersion(version));
    }
    let kind = bytes[6];
    let width = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[11..15].try_into().unwrap()) as usize;
    let payload = &bytes[RASTER_HEADER_LEN..];
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or(IoError::TruncatedPayload {
            expected: usize::MAX,
            found: payload.len(),
        })?;
    if payload.len() != expected {
        return Err(IoError::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    let words = payload.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]);
    match kind {
        1 => {
            let (semantic, instance) = words
                .map(|w| {
                    let p = u32::from_le_bytes(w);
                    ((p >> 16) as u16, p & 0xFFFF)
                })
                .unzip();
            Ok(Raster::Panoptic(PanopticMap {
                width,
                height,
                semantic,
                instance,
            }))
        }
        2 => {
            let values = words.map(|w| f32::from_le_bytes(w) as f64).collect();
            Ok(Raster::Depth(
                DepthMap::new(width, height, values).expect("length checked above"),
            ))
        }
        k => Err(IoError::UnknownKind(k)),
    }
}

pub fn read_raster(path: &Path) -> Result<Raster, IoError> {
    decode_raster(&read_bytes(path)?)
}

pub fn write_raster(path: &Path, raster: &Raster) -> Result<(), IoError> {
    write_file(path, &encode_raster(raster)?)
}

pub fn panoptic_file_name(frame: u64) -> String {
    format!("{frame:06}.panoptic.uprs")
}

pub fn depth_file_name(frame: u64) -> String {
    format!("{frame:06}.depth.uprs")
}

/// A directory of annotated sequences:
/// `<root>/<sequence>/<frame:06>.panoptic.uprs` with optional
/// `<frame:06>.depth.uprs` next to it. Sequences and frames are sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDir {
    pub sequences: Vec<(String, Vec<u64>, Sequence)>,
}

pub fn read_sequence_dir(root: &Path) -> Result<SequenceDir, IoError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| IoError::Io { path, source }
    };
    let mut names: Vec<String> = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let entry = entry.map_err(io_err(root))?;
        if entry.file_type().map_err(io_err(root))?.is_dir() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    let mut sequences = Vec::new();
    for name in names {
        let dir = root.join(&name);
        let mut frames: Vec<u64> = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let entry = entry.map_err(io_err(&dir))?;
            let file = entry.file_name().to_string_lossy().into_owned();
            if let Some(stem) = file.strip_suffix(".panoptic.uprs") {
                let frame = stem.parse().map_err(|_| {
                    IoError::Layout(format!("{}: file name is not a frame number", dir.join(&file).display()))
                })?;
                frames.push(frame);
            }
        }
        frames.sort_unstable();
        let mut seq = Sequence::default();
        for &f in &frames {
            let panoptic = match read_raster(&dir.join(panoptic_file_name(f)))? {
                Raster::Panoptic(m) => m,
                Raster::Depth(_) => {
                    return Err(IoError::Layout(format!(
                        "{name} frame {f}: expected a panoptic raster"
                    )))
                }
            };
            let depth_path = dir.join(depth_file_name(f));
            let depth = if depth_path.exists() {
                match read_raster(&depth_path)? {
                    Raster::Depth(d) => Some(d),
                    Raster::Panoptic(_) => {
                        return Err(IoError::Layout(format!(
                            "{name} frame {f}: expected a depth raster"
                        )))
                    }
                }
            } else {
                None
            };
            seq.frames.push(Frame { panoptic, depth });
        }
        sequences.push((name, frames, seq));
    }
    Ok(SequenceDir { sequences })
}

pub fn write_sequence_dir(root: &Path, dir: &SequenceDir) -> Result<(), IoError> {
    for (name, frames, seq) in &dir.sequences {
        let sub = root.join(name);
        fs::create_dir_all(&sub).map_err(|source| IoError::Io {
            path: sub.clone(),
            source,
        })?;
        for (&f, frame) in frames.iter().zip(&seq.frames) {
            write_raster(&sub.join(panoptic_file_name(f)), &Raster::Panoptic(frame.panoptic.clone()))?;
            if let Some(d) = &frame.depth {
                write_raster(&sub.join(depth_file_name(f)), &Raster::Depth(d.clone()))?;
            }
        }
    }
    Ok(())
}

/// Ground truth written next to simulated detections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub sequence: String,
    pub scenario: ScenarioConfig,
    pub intrinsics: CameraIntrinsics,
    /// Object index of every detection, per frame.
    pub det_objects: Vec<Vec<usize>>,
    pub tracks: Vec<GroundTruthTrack>,
}

pub fn format_truth(sidecars: &[TruthSidecar]) -> Result<String, IoError> {
    let mut s = serde_json::to_string_pretty(sidecars)?;
    s.push('\n');
    Ok(s)
}

pub fn parse_truth(text: &str) -> Result<Vec<TruthSidecar>, IoError> {
    Ok(serde_json::from_str(text)?)
}

pub fn read_truth(path: &Path) -> Result<Vec<TruthSidecar>, IoError> {
    parse_truth(&read_text(path)?)
}

/// Pretty JSON with a trailing newline.
pub fn format_json<T: Serialize>(value: &T) -> Result<String, IoError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
