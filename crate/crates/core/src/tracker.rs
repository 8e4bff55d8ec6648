//! Online two-stage cascaded tracking by association.
//!
//! Each frame, detections are matched against live tracklets by a sequence
//! of stages. A stage builds a cost matrix over the detections and tracklets
//! left unmatched by earlier stages, gates it, and solves the assignment.
//! Whatever survives every stage starts a new track.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{project_bev, spatial_cost, BevPoint, CameraIntrinsics, GeometryError};
use crate::lapsolver::{self, CostMatrix, LapError, FORBIDDEN};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackerError {
    #[error("detection {index} has a zero-norm kernel")]
    ZeroNormKernel { index: usize },
    #[error("detection {index} kernel has dimension {found}, expected {expected}")]
    DimMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("detection {index} is invalid: {reason}")]
    InvalidDetection { index: usize, reason: String },
    #[error("frame {got} does not follow frame {previous}")]
    NonMonotonicFrame { previous: u64, got: u64 },
    #[error("spatial matching requires camera intrinsics")]
    MissingIntrinsics,
    #[error("invalid tracker config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Lap(#[from] LapError),
}

/// Positive track identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrackId(pub u64);

impl fmt::Display for TrackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One object proposal of a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Instance center `(u, v)` in pixels.
    pub center: (f64, f64),
    /// Mask kernel embedding.
    pub kernel: Vec<f64>,
    /// Mean instance depth in meters.
    pub mean_depth: f64,
    pub category: u32,
    pub score: f64,
}

impl Detection {
    pub fn kernel_norm(&self) -> f64 {
        self.kernel.iter().map(|k| k * k).sum::<f64>().sqrt()
    }

    fn validate(&self, index: usize, dim: Option<usize>) -> Result<(), TrackerError> {
        let invalid = |reason: &str| TrackerError::InvalidDetection {
            index,
            reason: reason.to_string(),
        };
        if let Some(expected) = dim {
            if self.kernel.len() != expected {
                return Err(TrackerError::DimMismatch {
                    index,
                    expected,
                    found: self.kernel.len(),
                });
            }
        }
        if self.kernel.is_empty() {
            return Err(invalid("empty kernel"));
        }
        if self.kernel.iter().any(|k| !k.is_finite()) {
            return Err(invalid("non-finite kernel entry"));
        }
        if self.kernel_norm() == 0.0 {
            return Err(TrackerError::ZeroNormKernel { index });
        }
        if !(self.mean_depth > 0.0) || !self.mean_depth.is_finite() {
            return Err(invalid("mean depth must be positive"));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(invalid("score outside [0, 1]"));
        }
        if !self.center.0.is_finite() || !self.center.1.is_finite() {
            return Err(invalid("non-finite center"));
        }
        Ok(())
    }
}

/// A detection bound to a persistent identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    pub detection: Detection,
    pub track_id: TrackId,
    pub last_seen: u64,
    /// Steps since the last match.
    pub age: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    /// Cosine distance between mask kernels.
    #[serde(rename = "am")]
    Appearance,
    /// Euclidean distance between bird's-eye-view positions.
    #[serde(rename = "sm")]
    Spatial,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Appearance => "am",
            Stage::Spatial => "sm",
        })
    }
}

impl FromStr for Stage {
    type Err = TrackerError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "am" | "appearance" => Ok(Stage::Appearance),
            "sm" | "spatial" => Ok(Stage::Spatial),
            other => Err(TrackerError::InvalidConfig(format!("unknown stage '{other}'"))),
        }
    }
}

/// Parses a comma separated stage list such as `am,sm`.
pub fn parse_stages(s: &str) -> Result<Vec<Stage>, TrackerError> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(Stage::from_str)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "lowercase")]
pub enum KernelUpdate {
    Replace,
    Ema { alpha: f64 },
}

impl fmt::Display for KernelUpdate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelUpdate::Replace => f.write_str("replace"),
            KernelUpdate::Ema { alpha } => write!(f, "ema:{alpha}"),
        }
    }
}

impl FromStr for KernelUpdate {
    type Err = TrackerError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("replace") {
            return Ok(KernelUpdate::Replace);
        }
        if let Some(alpha) = s.strip_prefix("ema:").or_else(|| s.strip_prefix("ema=")) {
            let alpha: f64 = alpha
                .parse()
                .map_err(|_| TrackerError::InvalidConfig(format!("bad ema alpha '{alpha}'")))?;
            return Ok(KernelUpdate::Ema { alpha });
        }
        Err(TrackerError::InvalidConfig(format!(
            "unknown kernel update '{s}' (expected replace or ema:<alpha>)"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub stages: Vec<Stage>,
    /// Maximum cosine distance accepted by the appearance stage.
    pub am_gate: f64,
    /// Maximum BEV distance in meters accepted by the spatial stage.
    pub sm_gate: f64,
    /// Unmatched steps a tracklet survives before it is retired.
    pub max_age: u32,
    pub kernel_update: KernelUpdate,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            stages: vec![Stage::Appearance, Stage::Spatial],
            am_gate: 0.5,
            sm_gate: 2.0,
            max_age: 1,
            kernel_update: KernelUpdate::Replace,
        }
    }
}

impl TrackerConfig {
    pub fn with_stages(stages: &[Stage]) -> Self {
        Self {
            stages: stages.to_vec(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrackerError> {
        let bad = |m: &str| Err(TrackerError::InvalidConfig(m.to_string()));
        if self.stages.is_empty() {
            return bad("at least one stage is required");
        }
        if !(self.am_gate >= 0.0) || !(self.sm_gate >= 0.0) {
            return bad("gates must be non-negative");
        }
        if self.max_age < 1 {
            return bad("max_age must be at least 1");
        }
        if let KernelUpdate::Ema { alpha } = self.kernel_update {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return bad("ema alpha must lie in (0, 1]");
            }
        }
        Ok(())
    }

    pub fn needs_intrinsics(&self) -> bool {
        self.stages.contains(&Stage::Spatial)
    }

    fn gate(&self, stage: Stage) -> f64 {
        match stage {
            Stage::Appearance => self.am_gate,
            Stage::Spatial => self.sm_gate,
        }
    }
}

/// Track id given to one detection of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub detection: usize,
    pub track_id: TrackId,
    /// Stage that matched the detection, `None` for a newly created track.
    pub stage: Option<Stage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    pub active: Vec<Tracklet>,
    pub next_id: u64,
    pub frame: Option<u64>,
    pub kernel_dim: Option<usize>,
}

impl Default for TrackerState {
    fn default() -> Self {
        Self {
            active: Vec::new(),
            next_id: 1,
            frame: None,
            kernel_dim: None,
        }
    }
}

fn gated_matrix(
    dets: &[&Detection],
    trks: &[&Detection],
    mut cost: impl FnMut(usize, usize) -> f64,
) -> Result<CostMatrix, TrackerError> {
    Ok(CostMatrix::from_fn(dets.len(), trks.len(), |i, n| {
        if dets[i].category != trks[n].category {
            FORBIDDEN
        } else {
            cost(i, n)
        }
    })?)
}

fn appearance_matrix(dets: &[&Detection], trks: &[&Detection]) -> Result<CostMatrix, TrackerError> {
    let norms = |side: &[&Detection]| -> Result<Vec<f64>, TrackerError> {
        side.iter()
            .enumerate()
            .map(|(index, d)| {
                let n = d.kernel_norm();
                if n == 0.0 || !n.is_finite() {
                    Err(TrackerError::ZeroNormKernel { index })
                } else {
                    Ok(n)
                }
            })
            .collect()
    };
    let det_norms = norms(dets)?;
    let trk_norms = norms(trks)?;
    for (index, d) in dets.iter().enumerate() {
        if let Some(t) = trks.first() {
            if d.kernel.len() != t.kernel.len() {
                return Err(TrackerError::DimMismatch {
                    index,
                    expected: t.kernel.len(),
                    found: d.kernel.len(),
                });
            }
        }
    }
    gated_matrix(dets, trks, |i, n| {
        let dot: f64 = dets[i]
            .kernel
            .iter()
            .zip(&trks[n].kernel)
            .map(|(a, b)| a * b)
            .sum();
        (1.0 - dot / (det_norms[i] * trk_norms[n])).clamp(0.0, 2.0)
    })
}

fn spatial_matrix(
    dets: &[&Detection],
    trks: &[&Detection],
    intrinsics: &CameraIntrinsics,
) -> Result<CostMatrix, TrackerError> {
    let project = |d: &&Detection| project_bev(d.center, d.mean_depth, intrinsics);
    let det_bev: Vec<BevPoint> = dets.iter().map(project).collect::<Result<_, _>>()?;
    let trk_bev: Vec<BevPoint> = trks.iter().map(project).collect::<Result<_, _>>()?;
    gated_matrix(dets, trks, |i, n| spatial_cost(&det_bev[i], &trk_bev[n]))
}

/// Cosine-distance cost between detections and tracklets, category gated.
pub fn appearance_cost(
    detections: &[Detection],
    tracklets: &[Tracklet],
) -> Result<CostMatrix, TrackerError> {
    let dets: Vec<&Detection> = detections.iter().collect();
    let trks: Vec<&Detection> = tracklets.iter().map(|t| &t.detection).collect();
    appearance_matrix(&dets, &trks)
}

/// BEV Euclidean cost between detections and tracklets, category gated.
pub fn spatial_cost_matrix(
    detections: &[Detection],
    tracklets: &[Tracklet],
    intrinsics: &CameraIntrinsics,
) -> Result<CostMatrix, TrackerError> {
    let dets: Vec<&Detection> = detections.iter().collect();
    let trks: Vec<&Detection> = tracklets.iter().map(|t| &t.detection).collect();
    spatial_matrix(&dets, &trks, intrinsics)
}

fn update_kernel(old: &[f64], new: &[f64], policy: KernelUpdate) -> Vec<f64> {
    match policy {
        KernelUpdate::Replace => new.to_vec(),
        KernelUpdate::Ema { alpha } => {
            let blended: Vec<f64> = old
                .iter()
                .zip(new)
                .map(|(o, n)| alpha * n + (1.0 - alpha) * o)
                .collect();
            if blended.iter().all(|&k| k == 0.0) {
                new.to_vec()
            } else {
                blended
            }
        }
    }
}

impl TrackerState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Advances the tracker by one frame.
    ///
    /// The state is left untouched when an error is returned.
    pub fn step(
        &mut self,
        frame: u64,
        detections: &[Detection],
        intrinsics: Option<&CameraIntrinsics>,
        config: &TrackerConfig,
    ) -> Result<Vec<Assignment>, TrackerError> {
        config.validate()?;
        if let Some(previous) = self.frame {
            if frame <= previous {
                return Err(TrackerError::NonMonotonicFrame {
                    previous,
                    got: frame,
                });
            }
        }
        if config.needs_intrinsics() && intrinsics.is_none() {
            return Err(TrackerError::MissingIntrinsics);
        }
        let dim = self
            .kernel_dim
            .or_else(|| detections.first().map(|d| d.kernel.len()));
        for (index, det) in detections.iter().enumerate() {
            det.validate(index, dim)?;
        }

        let mut det_track: Vec<Option<(usize, Stage)>> = vec![None; detections.len()];
        let mut trk_taken = vec![false; self.active.len()];

        for &stage in &config.stages {
            let det_idx: Vec<usize> = (0..detections.len())
                .filter(|&i| det_track[i].is_none())
                .collect();
            let trk_idx: Vec<usize> = (0..self.active.len()).filter(|&n| !trk_taken[n]).collect();
            if det_idx.is_empty() || trk_idx.is_empty() {
                continue;
            }
            let dets: Vec<&Detection> = det_idx.iter().map(|&i| &detections[i]).collect();
            let trks: Vec<&Detection> = trk_idx.iter().map(|&n| &self.active[n].detection).collect();
            let matrix = match stage {
                Stage::Appearance => appearance_matrix(&dets, &trks)?,
                Stage::Spatial => {
                    let intrinsics = intrinsics.ok_or(TrackerError::MissingIntrinsics)?;
                    spatial_matrix(&dets, &trks, intrinsics)?
                }
            };
            let matching = lapsolver::solve(&matrix.apply_gate(config.gate(stage)));
            for (r, c) in matching.pairs {
                det_track[det_idx[r]] = Some((trk_idx[c], stage));
                trk_taken[trk_idx[c]] = true;
            }
        }

        // Commit.
        let mut assignments = Vec::with_capacity(detections.len());
        for (i, det) in detections.iter().enumerate() {
            if let Some((n, stage)) = det_track[i] {
                let trk = &mut self.active[n];
                let kernel = update_kernel(&trk.detection.kernel, &det.kernel, config.kernel_update);
                trk.detection = Detection {
                    kernel,
                    ..det.clone()
                };
                trk.last_seen = frame;
                trk.age = 0;
                assignments.push(Assignment {
                    detection: i,
                    track_id: trk.track_id,
                    stage: Some(stage),
                });
            }
        }
        for (n, trk) in self.active.iter_mut().enumerate() {
            if !trk_taken[n] {
                trk.age += 1;
            }
        }
        self.active.retain(|t| t.age <= config.max_age);
        for (i, det) in detections.iter().enumerate() {
            if det_track[i].is_none() {
                let track_id = TrackId(self.next_id);
                self.next_id += 1;
                self.active.push(Tracklet {
                    detection: det.clone(),
                    track_id,
                    last_seen: frame,
                    age: 0,
                });
                assignments.push(Assignment {
                    detection: i,
                    track_id,
                    stage: None,
                });
            }
        }
        assignments.sort_by_key(|a| a.detection);
        self.frame = Some(frame);
        if self.kernel_dim.is_none() {
            self.kernel_dim = dim;
        }
        Ok(assignments)
    }
}

/// A tracker bound to one sequence.
#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    intrinsics: Option<CameraIntrinsics>,
    state: TrackerState,
}

impl Tracker {
    pub fn new(
        config: TrackerConfig,
        intrinsics: Option<CameraIntrinsics>,
    ) -> Result<Self, TrackerError> {
        config.validate()?;
        if config.needs_intrinsics() && intrinsics.is_none() {
            return Err(TrackerError::MissingIntrinsics);
        }
        if let Some(i) = &intrinsics {
            i.validate()?;
        }
        Ok(Self {
            config,
            intrinsics,
            state: TrackerState::new(),
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn state(&self) -> &TrackerState {
        &self.state
    }

    pub fn step(
        &mut self,
        frame: u64,
        detections: &[Detection],
    ) -> Result<Vec<Assignment>, TrackerError> {
        self.state
            .step(frame, detections, self.intrinsics.as_ref(), &self.config)
    }
}

/// Tracks a whole sequence given as `(frame, detections)` pairs.
pub fn track_sequence<'a>(
    frames: impl IntoIterator<Item = (u64, &'a [Detection])>,
    config: &TrackerConfig,
    intrinsics: Option<&CameraIntrinsics>,
) -> Result<Vec<Vec<Assignment>>, TrackerError> {
    let mut tracker = Tracker::new(config.clone(), intrinsics.copied())?;
    frames
        .into_iter()
        .map(|(frame, dets)| tracker.step(frame, dets))
        .collect()
}
