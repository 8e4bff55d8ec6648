use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use cascadetrack::io::{self, DetectionFile, TrackFile, TrackRecord, TruthSidecar};
use cascadetrack::simulator::{score_against_truth, AssociationSummary, SimulatedSequence};
use cascadetrack::tracker::Tracker;
use cascadetrack::{CameraIntrinsics, TrackId, TrackerConfig};
use clap::Args;
use serde_json::json;

use crate::config::{resolve_tracker, FileConfig, TrackerFlags};
use crate::output::{manifest_path_for, OutputSet, RunManifest, Timings};
use crate::UsageError;

#[derive(Debug, Clone, Args)]
pub struct TrackArgs {
    /// Detection file.
    #[arg(long)]
    pub detections: PathBuf,
    /// Camera intrinsics (TOML); required by the spatial stage.
    #[arg(long)]
    pub intrinsics: Option<PathBuf>,
    /// Settings file (TOML); flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub tracker: TrackerFlags,
    /// Truth sidecar written by `simulate`; association scores go into the
    /// manifest.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Track file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct TrackOutcome {
    pub tracks: TrackFile,
    pub scores: Option<Vec<(String, AssociationSummary)>>,
    pub outputs: Vec<PathBuf>,
}

/// Runs the tracker over every sequence of a detection file.
pub fn run_tracker(
    detections: &DetectionFile,
    config: &TrackerConfig,
    intrinsics: Option<&CameraIntrinsics>,
) -> Result<TrackFile> {
    let mut out = TrackFile::default();
    for seq in &detections.sequences {
        let mut tracker = Tracker::new(config.clone(), intrinsics.copied())?;
        let mut records = Vec::new();
        for fr in &seq.frames {
            let mut assignments = tracker
                .step(fr.frame, &fr.detections)
                .with_context(|| format!("sequence {} frame {}", seq.id, fr.frame))?;
            assignments.sort_by_key(|a| a.detection);
            records.extend(assignments.into_iter().map(|a| TrackRecord {
                frame: fr.frame,
                detection: a.detection,
                track_id: a.track_id,
            }));
        }
        out.sequences.push((seq.id.clone(), records));
    }
    Ok(out)
}

/// Scores a track file against simulator truth, sequence by sequence.
pub fn score_tracks(
    tracks: &TrackFile,
    detections: &DetectionFile,
    truth: &[TruthSidecar],
) -> Result<Vec<(String, AssociationSummary)>> {
    let by_name: BTreeMap<&str, &TruthSidecar> =
        truth.iter().map(|t| (t.sequence.as_str(), t)).collect();
    let dets: BTreeMap<&str, _> = detections
        .sequences
        .iter()
        .map(|s| (s.id.as_str(), s))
        .collect();
    let mut out = Vec::new();
    for (name, records) in &tracks.sequences {
        let sidecar = by_name
            .get(name.as_str())
            .with_context(|| format!("no truth for sequence {name}"))?;
        let det_seq = dets
            .get(name.as_str())
            .with_context(|| format!("no detections for sequence {name}"))?;
        if det_seq.frames.len() != sidecar.det_objects.len() {
            bail!(
                "sequence {name}: {} detection frames vs {} truth frames",
                det_seq.frames.len(),
                sidecar.det_objects.len()
            );
        }
        let frame_index: BTreeMap<u64, usize> = det_seq
            .frames
            .iter()
            .enumerate()
            .map(|(i, f)| (f.frame, i))
            .collect();
        let mut ids: Vec<Vec<TrackId>> = sidecar
            .det_objects
            .iter()
            .map(|o| vec![TrackId(0); o.len()])
            .collect();
        for r in records {
            let slot = frame_index
                .get(&r.frame)
                .and_then(|&f| ids[f].get_mut(r.detection))
                .with_context(|| {
                    format!("sequence {name}: no detection {} in frame {}", r.detection, r.frame)
                })?;
            *slot = r.track_id;
        }
        let sim = SimulatedSequence {
            frames: det_seq.frames.iter().map(|f| f.detections.clone()).collect(),
            det_objects: sidecar.det_objects.clone(),
            tracks: sidecar.tracks.clone(),
        };
        out.push((name.clone(), score_against_truth(&ids, &sim)));
    }
    Ok(out)
}

pub fn cmd_track(args: &TrackArgs) -> Result<TrackOutcome> {
    let file_cfg = FileConfig::load(args.config.as_deref())?;
    let config = resolve_tracker(&file_cfg, &args.tracker)?;
    if config.needs_intrinsics() && args.intrinsics.is_none() {
        return Err(UsageError("the spatial stage (sm) requires --intrinsics".into()).into());
    }
    let mut timings = Timings::default();
    let intrinsics = args
        .intrinsics
        .as_deref()
        .map(io::read_intrinsics)
        .transpose()?;
    let detections = timings.time("read", || io::read_detections(&args.detections))?;
    let tracks = timings.time("track", || run_tracker(&detections, &config, intrinsics.as_ref()))?;
    let scores = match &args.truth {
        Some(p) => {
            let truth = io::read_truth(p)?;
            Some(timings.time("score", || score_tracks(&tracks, &detections, &truth))?)
        }
        None => None,
    };

    let mut set = OutputSet::new();
    timings.time("write", || -> Result<()> {
        set.write_str(&args.out, &io::format_tracks(&tracks)?)
    })?;
    let mut manifest = RunManifest::new(
        "track",
        json!({
            "tracker": config,
            "scores": scores.as_ref().map(|s| s.iter().map(|(n, v)| json!({"sequence": n, "summary": v})).collect::<Vec<_>>()),
        }),
    )
    .input(&args.detections);
    if let Some(p) = &args.intrinsics {
        manifest = manifest.input(p);
    }
    if let Some(p) = &args.truth {
        manifest = manifest.input(p);
    }
    let outputs = manifest.finish(set, &manifest_path_for(&args.out), timings)?;
    Ok(TrackOutcome {
        tracks,
        scores,
        outputs,
    })
}
