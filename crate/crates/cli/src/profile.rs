use std::hint::black_box;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::Result;
use cascadetrack::io::{self, DetectionFile};
use cascadetrack::tracker::{Tracklet, TrackerState};
use cascadetrack::{CameraIntrinsics, Detection, Stage, TrackId, TrackerConfig};
use clap::Args;
use serde::Serialize;
use serde_json::json;

use crate::config::{resolve_tracker, FileConfig, TrackerFlags};
use crate::output::{manifest_path_for, OutputSet, RunManifest, Timings};
use crate::plot;
use crate::UsageError;

pub const DEFAULT_REPS: usize = 5;

#[derive(Debug, Clone, Args)]
pub struct ProfileArgs {
    /// Detection file.
    #[arg(long)]
    pub detections: PathBuf,
    /// Camera intrinsics (TOML).
    #[arg(long)]
    pub intrinsics: Option<PathBuf>,
    /// Settings file (TOML); flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Gates and update policy; `--stages` is ignored, all stage sets run.
    #[command(flatten)]
    pub tracker: TrackerFlags,
    /// Timed passes over the sequence.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Also write an SVG of the mean latencies.
    #[arg(long)]
    pub plots: bool,
    /// Report (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageLatency {
    /// `none` is the pass that hands out fresh ids without association.
    pub stages: String,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
    /// Mean minus the mean of `none`.
    pub delta_ms: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileReport {
    pub reps: usize,
    pub frames: usize,
    pub mean_detections_per_frame: f64,
    pub mean_tracklets_per_frame: f64,
    pub results: Vec<StageLatency>,
}

impl ProfileReport {
    pub fn get(&self, stages: &str) -> Option<&StageLatency> {
        self.results.iter().find(|r| r.stages == stages)
    }
}

/// Stage sets in report order; `None` is the no-tracking pass.
pub fn profile_stage_sets() -> Vec<Option<Vec<Stage>>> {
    vec![
        None,
        Some(vec![Stage::Appearance]),
        Some(vec![Stage::Spatial]),
        Some(vec![Stage::Appearance, Stage::Spatial]),
    ]
}

fn label(set: &Option<Vec<Stage>>) -> String {
    match set {
        None => "none".into(),
        Some(s) => s.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
    }
}

/// One timed unit: the previous frame's detections as live tracklets and
/// the current frame's detections.
struct Snapshot<'a> {
    state: TrackerState,
    frame: u64,
    detections: &'a [Detection],
}

fn snapshots(file: &DetectionFile) -> Vec<Snapshot<'_>> {
    let mut out = Vec::new();
    for seq in &file.sequences {
        for pair in seq.frames.windows(2) {
            let (prev, cur) = (&pair[0], &pair[1]);
            let active: Vec<Tracklet> = prev
                .detections
                .iter()
                .enumerate()
                .map(|(i, d)| Tracklet {
                    detection: d.clone(),
                    track_id: TrackId(i as u64 + 1),
                    last_seen: prev.frame,
                    age: 0,
                })
                .collect();
            out.push(Snapshot {
                state: TrackerState {
                    next_id: active.len() as u64 + 1,
                    kernel_dim: active.first().map(|t| t.detection.kernel.len()),
                    active,
                    frame: Some(prev.frame),
                },
                frame: cur.frame,
                detections: &cur.detections,
            });
        }
    }
    out
}

/// Milliseconds for one frame under one stage set; `None` hands out fresh
/// ids without association.
fn time_frame(
    snap: &Snapshot<'_>,
    config: Option<&TrackerConfig>,
    intrinsics: &CameraIntrinsics,
) -> Result<f64> {
    let mut state = snap.state.clone();
    let start = Instant::now();
    match config {
        Some(cfg) => {
            black_box(state.step(snap.frame, black_box(snap.detections), Some(intrinsics), cfg)?);
        }
        None => {
            let first = state.next_id;
            let out: Vec<(Detection, TrackId)> = black_box(snap.detections)
                .iter()
                .enumerate()
                .map(|(i, d)| (d.clone(), TrackId(first + i as u64)))
                .collect();
            black_box(out);
        }
    }
    let ms = start.elapsed().as_secs_f64() * 1e3;
    drop(black_box(state));
    Ok(ms)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Per-frame tracker latency for every stage set.
///
/// Every frame after the first of a sequence is timed from the same
/// snapshot, in which each detection of the previous frame is a live
/// tracklet, so all stage sets associate identical inputs. Stage sets are
/// interleaved frame by frame with a rotating order, after one untimed
/// warm-up pass.
pub fn profile(
    file: &DetectionFile,
    base: &TrackerConfig,
    intrinsics: &CameraIntrinsics,
    reps: usize,
) -> Result<ProfileReport> {
    if reps == 0 {
        return Err(UsageError("--reps must be at least 1".into()).into());
    }
    let sets = profile_stage_sets();
    let configs: Vec<Option<TrackerConfig>> = sets
        .iter()
        .map(|s| {
            s.as_ref().map(|stages| TrackerConfig {
                stages: stages.clone(),
                ..base.clone()
            })
        })
        .collect();
    let snaps = snapshots(file);
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); sets.len()];
    for snap in &snaps {
        for cfg in &configs {
            time_frame(snap, cfg.as_ref(), intrinsics)?;
        }
    }
    for rep in 0..reps {
        for (f, snap) in snaps.iter().enumerate() {
            for j in 0..sets.len() {
                let i = (j + rep + f) % sets.len();
                samples[i].push(time_frame(snap, configs[i].as_ref(), intrinsics)?);
            }
        }
    }
    let means: Vec<f64> = samples
        .iter()
        .map(|s| s.iter().sum::<f64>() / s.len().max(1) as f64)
        .collect();
    let results = sets
        .iter()
        .zip(samples.iter_mut())
        .zip(&means)
        .enumerate()
        .map(|(i, ((set, s), &mean))| {
            s.sort_by(f64::total_cmp);
            StageLatency {
                stages: label(set),
                mean_ms: mean,
                p50_ms: quantile(s, 0.5),
                p99_ms: quantile(s, 0.99),
                delta_ms: if i == 0 { 0.0 } else { mean - means[0] },
                samples: s.len(),
            }
        })
        .collect();
    let frames = snaps.len();
    let dets: usize = snaps.iter().map(|s| s.detections.len()).sum();
    let trks: usize = snaps.iter().map(|s| s.state.active.len()).sum();
    Ok(ProfileReport {
        reps,
        frames,
        mean_detections_per_frame: dets as f64 / frames.max(1) as f64,
        mean_tracklets_per_frame: trks as f64 / frames.max(1) as f64,
        results,
    })
}

pub fn cmd_profile(args: &ProfileArgs) -> Result<ProfileReport> {
    let file_cfg = FileConfig::load(args.config.as_deref())?;
    let base = resolve_tracker(&file_cfg, &args.tracker)?;
    let Some(intrinsics_path) = &args.intrinsics else {
        return Err(UsageError("profiling the spatial stage requires --intrinsics".into()).into());
    };
    let reps = args.reps.or(file_cfg.profile.reps).unwrap_or(DEFAULT_REPS);
    let mut timings = Timings::default();
    let intrinsics = io::read_intrinsics(intrinsics_path)?;
    let file = timings.time("read", || io::read_detections(&args.detections))?;
    let report = timings.time("profile", || profile(&file, &base, &intrinsics, reps))?;

    let mut set = OutputSet::new();
    set.write_str(&args.out, &io::format_json(&report)?)?;
    if args.plots {
        let bars: Vec<(String, f64)> = report
            .results
            .iter()
            .map(|r| (r.stages.clone(), r.mean_ms))
            .collect();
        let mut svg_path = args.out.clone().into_os_string();
        svg_path.push(".svg");
        set.write_str(
            &PathBuf::from(svg_path),
            &plot::bar_chart("Mean per-frame latency (ms)", &bars),
        )?;
    }
    let mut manifest = RunManifest::new("profile", json!({ "tracker": base, "reps": reps }))
        .input(&args.detections)
        .input(intrinsics_path);
    if let Some(p) = &args.config {
        manifest = manifest.input(p);
    }
    manifest.finish(set, &manifest_path_for(&args.out), timings)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&s, 0.5), 2.0);
        assert_eq!(quantile(&s, 0.99), 4.0);
        assert_eq!(quantile(&s, 0.0), 1.0);
        assert_eq!(quantile(&[], 0.5), 0.0);
    }
}
