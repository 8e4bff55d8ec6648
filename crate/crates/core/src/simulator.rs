//! Deterministic synthetic scenes with ground-truth identities.
//!
//! Objects move at constant velocity on the ground plane while the camera
//! drives straight forward. Each object carries a fixed unit latent
//! embedding; its per-frame kernel is the latent plus isotropic Gaussian
//! noise, renormalized. Mean depth gets multiplicative Gaussian noise.
//!
//! # Random streams
//!
//! All randomness comes from ChaCha20 (`rand_chacha::ChaCha20Rng`) with a
//! 32-byte key holding the 64-bit seed in little-endian order in its first
//! eight bytes and zeros elsewhere. Geometry and latents are drawn from
//! `layout_seed` on stream 0; noise, dropout and detection order from `seed`
//! on stream 1. A uniform draw is `(next_u64 >> 11) · 2⁻⁵³`; a normal draw
//! is Box-Muller `sqrt(-2 ln(1 - u1)) · cos(2π u2)` on two uniforms.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BevPoint, CameraIntrinsics};
use crate::metrics::{self, ClassPartition, PanopticMap, Sequence, VOID_CLASS};
use crate::tracker::{self, Assignment, Detection, Stage, TrackId, TrackerConfig, TrackerError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("object {object} is behind the camera at frame {frame} (depth {depth})")]
    BehindCamera {
        object: usize,
        frame: usize,
        depth: f64,
    },
    #[error("could not place object {object} with the requested separation")]
    Placement { object: usize },
}

/// Seeded ChaCha20 stream with the draw conventions documented above.
#[derive(Debug, Clone)]
pub struct SimRng(ChaCha20Rng);

impl SimRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(stream);
        Self(rng)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, range: [f64; 2]) -> f64 {
        range[0] + (range[1] - range[0]) * self.uniform()
    }

    /// Uniform integer in `0..n`, `n > 0`.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Fisher-Yates shuffle from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Explicitly placed object. Positions are world coordinates at frame 0,
/// velocities in meters per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub category: u32,
    pub x: f64,
    pub z: f64,
    #[serde(default)]
    pub vx: f64,
    #[serde(default)]
    pub vz: f64,
    /// Drawn at random when absent; normalized otherwise.
    #[serde(default)]
    pub latent: Option<Vec<f64>>,
}

/// Ranges for randomly laid out objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomLayout {
    pub lateral_range: [f64; 2],
    pub depth_range: [f64; 2],
    pub lateral_speed: [f64; 2],
    pub forward_speed: [f64; 2],
    /// Minimum BEV distance between any two objects over all frames.
    pub min_separation: f64,
}

impl Default for RandomLayout {
    fn default() -> Self {
        Self {
            lateral_range: [-8.0, 8.0],
            depth_range: [10.0, 40.0],
            lateral_speed: [-0.05, 0.05],
            forward_speed: [0.05, 0.15],
            min_separation: 3.0,
        }
    }
}

/// Object `object` emits no detection for frames `start..end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occlusion {
    pub object: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    /// Noise, dropout and detection order.
    pub seed: u64,
    /// Object geometry and latent embeddings.
    pub layout_seed: u64,
    pub num_objects: usize,
    pub num_frames: usize,
    pub classes: Vec<u32>,
    pub embedding_dim: usize,
    pub embedding_noise_sigma: f64,
    /// Relative standard deviation of mean depth.
    pub depth_noise_sigma: f64,
    pub dropout: f64,
    /// Forward camera translation per frame, meters.
    pub camera_speed: f64,
    pub camera_height: f64,
    pub layout: RandomLayout,
    /// Overrides the random layout when non-empty.
    pub objects: Vec<ObjectSpec>,
    pub occlusions: Vec<Occlusion>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            layout_seed: 0,
            num_objects: 10,
            num_frames: 100,
            classes: vec![11, 13],
            embedding_dim: 16,
            embedding_noise_sigma: 0.0,
            depth_noise_sigma: 0.0,
            dropout: 0.0,
            camera_speed: 0.1,
            camera_height: 1.5,
            layout: RandomLayout::default(),
            objects: Vec::new(),
            occlusions: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if self.num_frames == 0 || self.embedding_dim == 0 {
            return bad("num_frames and embedding_dim must be at least 1");
        }
        if self.classes.is_empty() && self.objects.is_empty() {
            return bad("classes must not be empty");
        }
        if self.classes.iter().any(|&c| c >= VOID_CLASS as u32) {
            return bad("class ids must be below 65535");
        }
        for s in [self.embedding_noise_sigma, self.depth_noise_sigma] {
            if !(s >= 0.0) || !s.is_finite() {
                return bad("noise sigmas must be finite and non-negative");
            }
        }
        if !(0.0..=1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1]");
        }
        if !self.camera_speed.is_finite() || !self.camera_height.is_finite() {
            return bad("camera motion must be finite");
        }
        let l = &self.layout;
        for r in [l.lateral_range, l.depth_range, l.lateral_speed, l.forward_speed] {
            if !r[0].is_finite() || !r[1].is_finite() || r[0] > r[1] {
                return bad("layout ranges must be finite and ordered");
            }
        }
        if !(l.min_separation >= 0.0) {
            return bad("min_separation must be non-negative");
        }
        if !self.objects.is_empty() && self.objects.len() != self.num_objects {
            return bad("num_objects must match the explicit object list");
        }
        for o in &self.objects {
            if ![o.x, o.z, o.vx, o.vz].iter().all(|v| v.is_finite()) {
                return bad("object positions and speeds must be finite");
            }
            if o.category >= VOID_CLASS as u32 {
                return bad("class ids must be below 65535");
            }
            if let Some(lat) = &o.latent {
                if lat.len() != self.embedding_dim || lat.iter().all(|&v| v == 0.0) {
                    return bad("latents must be non-zero with embedding_dim entries");
                }
            }
        }
        for occ in &self.occlusions {
            if occ.object >= self.num_objects || occ.start > occ.end {
                return bad("occlusions must name an object and an ordered frame range");
            }
        }
        Ok(())
    }
}

/// Camera used when no intrinsics are supplied: 1280x720, 700 px focal.
pub fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics {
        fx: 700.0,
        fy: 700.0,
        cx: 640.0,
        cy: 360.0,
        width: 1280.0,
        height: 720.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthState {
    /// Camera-relative ground position.
    pub bev: BevPoint,
    pub center: (f64, f64),
    pub depth: f64,
    /// Whether a detection was emitted for this frame.
    pub visible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthTrack {
    pub object_id: usize,
    pub category: u32,
    pub states: Vec<TruthState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSequence {
    pub frames: Vec<Vec<Detection>>,
    /// Object index of every detection, aligned with `frames`.
    pub det_objects: Vec<Vec<usize>>,
    pub tracks: Vec<GroundTruthTrack>,
}

struct Object {
    category: u32,
    x: f64,
    z: f64,
    vx: f64,
    vz: f64,
    latent: Vec<f64>,
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn random_latent(rng: &mut SimRng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        if v.iter().any(|&x| x != 0.0) {
            return normalized(v);
        }
    }
}

const PLACEMENT_ATTEMPTS: usize = 10_000;

fn layout_objects(cfg: &ScenarioConfig) -> Result<Vec<Object>, SimError> {
    let mut rng = SimRng::new(cfg.layout_seed, 0);
    if !cfg.objects.is_empty() {
        return Ok(cfg
            .objects
            .iter()
            .map(|o| Object {
                category: o.category,
                x: o.x,
                z: o.z,
                vx: o.vx,
                vz: o.vz,
                latent: match &o.latent {
                    Some(l) => normalized(l.clone()),
                    None => random_latent(&mut rng, cfg.embedding_dim),
                },
            })
            .collect());
    }
    let l = &cfg.layout;
    let last = (cfg.num_frames - 1) as f64;
    let mut objects: Vec<Object> = Vec::with_capacity(cfg.num_objects);
    for i in 0..cfg.num_objects {
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let cand = (
                rng.uniform_in(l.lateral_range),
                rng.uniform_in(l.depth_range),
                rng.uniform_in(l.lateral_speed),
                rng.uniform_in(l.forward_speed),
            );
            // Relative motion is linear, so the closest approach over the
            // sequence is the minimum of a convex quadratic on [0, last].
            let clear = objects.iter().all(|o| {
                let (dx, dz) = (cand.0 - o.x, cand.1 - o.z);
                let (ex, ez) = (cand.2 - o.vx, cand.3 - o.vz);
                let ee = ex * ex + ez * ez;
                let t = if ee > 0.0 {
                    (-(dx * ex + dz * ez) / ee).clamp(0.0, last)
                } else {
                    0.0
                };
                (dx + ex * t).hypot(dz + ez * t) >= l.min_separation
            });
            if clear {
                placed = Some(cand);
                break;
            }
        }
        let (x, z, vx, vz) = placed.ok_or(SimError::Placement { object: i })?;
        let category = cfg.classes[rng.below(cfg.classes.len())];
        let latent = random_latent(&mut rng, cfg.embedding_dim);
        objects.push(Object {
            category,
            x,
            z,
            vx,
            vz,
            latent,
        });
    }
    Ok(objects)
}

/// Generates a scenario. Pure in `(cfg, intrinsics)`.
pub fn generate(
    cfg: &ScenarioConfig,
    intrinsics: &CameraIntrinsics,
) -> Result<SimulatedSequence, SimError> {
    cfg.validate()?;
    intrinsics
        .validate()
        .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let objects = layout_objects(cfg)?;
    let mut noise = SimRng::new(cfg.seed, 1);

    let mut tracks: Vec<GroundTruthTrack> = objects
        .iter()
        .enumerate()
        .map(|(i, o)| GroundTruthTrack {
            object_id: i,
            category: o.category,
            states: Vec::with_capacity(cfg.num_frames),
        })
        .collect();
    let mut frames = Vec::with_capacity(cfg.num_frames);
    let mut det_objects = Vec::with_capacity(cfg.num_frames);

    for f in 0..cfg.num_frames {
        let t = f as f64;
        let mut dets: Vec<(usize, Detection)> = Vec::new();
        for (i, o) in objects.iter().enumerate() {
            let x = o.x + o.vx * t;
            let z = o.z + o.vz * t - cfg.camera_speed * t;
            if !(z > 0.0) {
                return Err(SimError::BehindCamera {
                    object: i,
                    frame: f,
                    depth: z,
                });
            }
            let center = intrinsics.project(x, cfg.camera_height, z);
            let occluded = cfg
                .occlusions
                .iter()
                .any(|occ| occ.object == i && (occ.start..occ.end).contains(&f));
            // Draw noise for every object and frame so that occlusions and
            // dropout do not shift the streams of other objects.
            let kernel: Vec<f64> = normalized(
                o.latent
                    .iter()
                    .map(|&l| l + cfg.embedding_noise_sigma * noise.normal())
                    .collect(),
            );
            let depth_factor = (1.0 + cfg.depth_noise_sigma * noise.normal()).max(0.01);
            let dropped = noise.uniform() < cfg.dropout;
            let visible = intrinsics.contains(center.0, center.1) && !occluded && !dropped;
            if visible {
                dets.push((
                    i,
                    Detection {
                        center,
                        kernel,
                        mean_depth: z * depth_factor,
                        category: o.category,
                        score: 1.0,
                    },
                ));
            }
            tracks[i].states.push(TruthState {
                bev: BevPoint {
                    x_lateral: x,
                    z_forward: z,
                },
                center,
                depth: z,
                visible,
            });
        }
        noise.shuffle(&mut dets);
        det_objects.push(dets.iter().map(|d| d.0).collect());
        frames.push(dets.into_iter().map(|d| d.1).collect());
    }
    Ok(SimulatedSequence {
        frames,
        det_objects,
        tracks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssociationSummary {
    pub id_switches: usize,
    pub aq: f64,
    pub stq: f64,
    pub detections: usize,
}

/// Track id per detection, aligned with the frames of `seq`.
pub fn ids_from_assignments(assignments: &[Vec<Assignment>], seq: &SimulatedSequence) -> Vec<Vec<TrackId>> {
    seq.frames
        .iter()
        .zip(assignments)
        .map(|(dets, asg)| {
            let mut ids = vec![TrackId(0); dets.len()];
            for a in asg {
                ids[a.detection] = a.track_id;
            }
            ids
        })
        .collect()
}

/// Scores predicted ids against the generating objects.
///
/// Every object owns one pixel per frame. Truth pixels carry the object's
/// class and id where a detection was emitted and are VOID elsewhere;
/// predicted pixels carry the predicted track id. AQ and STQ come from
/// [`metrics::stq`]. An id switch is a change of predicted id between two
/// consecutive detected frames of the same object.
pub fn score_against_truth(track_ids: &[Vec<TrackId>], seq: &SimulatedSequence) -> AssociationSummary {
    let n = seq.tracks.len();
    let mut truth_maps = Vec::with_capacity(seq.frames.len());
    let mut pred_maps = Vec::with_capacity(seq.frames.len());
    let mut last_id: Vec<Option<TrackId>> = vec![None; n];
    let mut id_switches = 0;
    let mut detections = 0;
    // Dense relabeling keeps instance ids within u32 whatever the track ids.
    let mut dense: std::collections::BTreeMap<TrackId, u32> = Default::default();
    for (objs, ids) in seq.det_objects.iter().zip(track_ids) {
        let mut truth = PanopticMap::void(n.max(1), 1);
        let mut pred = PanopticMap::void(n.max(1), 1);
        for (&obj, &id) in objs.iter().zip(ids) {
            let class = seq.tracks[obj].category as u16;
            truth.semantic[obj] = class;
            truth.instance[obj] = obj as u32 + 1;
            let next = dense.len() as u32 + 1;
            pred.semantic[obj] = class;
            pred.instance[obj] = *dense.entry(id).or_insert(next);
            if let Some(prev) = last_id[obj] {
                if prev != id {
                    id_switches += 1;
                }
            }
            last_id[obj] = Some(id);
            detections += 1;
        }
        truth_maps.push(truth);
        pred_maps.push(pred);
    }
    let partition = ClassPartition::new(seq.tracks.iter().map(|t| t.category as u16));
    let report = metrics::stq(
        &[Sequence::from_maps(pred_maps)],
        &[Sequence::from_maps(truth_maps)],
        &partition,
    )
    .expect("rasters are built with matching shapes");
    AssociationSummary {
        id_switches,
        aq: report.aq,
        stq: report.stq,
        detections,
    }
}

/// Runs the tracker over a simulated sequence and scores it.
pub fn track_and_score(
    seq: &SimulatedSequence,
    config: &TrackerConfig,
    intrinsics: &CameraIntrinsics,
) -> Result<AssociationSummary, TrackerError> {
    let assignments = tracker::track_sequence(
        seq.frames
            .iter()
            .enumerate()
            .map(|(f, d)| (f as u64, d.as_slice())),
        config,
        Some(intrinsics),
    )?;
    Ok(score_against_truth(&ids_from_assignments(&assignments, seq), seq))
}

/// Baseline that ignores all evidence: each frame gets a random
/// permutation of the ids `1..=n`.
pub fn random_track_ids(seq: &SimulatedSequence, seed: u64) -> Vec<Vec<TrackId>> {
    let mut rng = SimRng::new(seed, 2);
    seq.frames
        .iter()
        .map(|dets| {
            let mut ids: Vec<TrackId> = (1..=dets.len() as u64).map(TrackId).collect();
            rng.shuffle(&mut ids);
            ids
        })
        .collect()
}

/// Scenario families stressing one association cue each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Noisy embeddings, objects well apart in depth.
    AppearanceStress,
    /// Clean embeddings, objects crowded into one depth band.
    SpatialStress,
    Mixed,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::AppearanceStress, Family::SpatialStress, Family::Mixed];

    pub fn name(self) -> &'static str {
        match self {
            Family::AppearanceStress => "appearance-stress",
            Family::SpatialStress => "spatial-stress",
            Family::Mixed => "mixed",
        }
    }

    pub fn is_stress(self) -> bool {
        self != Family::Mixed
    }

    /// Scenario of this family for one seed; geometry and noise both vary
    /// with the seed.
    pub fn scenario(self, seed: u64) -> ScenarioConfig {
        let base = ScenarioConfig {
            seed,
            layout_seed: seed,
            num_objects: 10,
            num_frames: 60,
            classes: vec![13],
            embedding_dim: 64,
            camera_speed: 0.1,
            ..ScenarioConfig::default()
        };
        match self {
            Family::AppearanceStress => ScenarioConfig {
                embedding_noise_sigma: 0.13,
                depth_noise_sigma: 0.03,
                layout: RandomLayout {
                    lateral_range: [-6.0, 6.0],
                    depth_range: [8.0, 40.0],
                    lateral_speed: [-0.15, 0.15],
                    forward_speed: [0.0, 0.2],
                    min_separation: 1.5,
                },
                ..base
            },
            Family::SpatialStress => ScenarioConfig {
                embedding_noise_sigma: 0.10,
                depth_noise_sigma: 0.05,
                layout: RandomLayout {
                    lateral_range: [-5.0, 5.0],
                    depth_range: [14.0, 18.0],
                    lateral_speed: [-0.25, 0.25],
                    forward_speed: [0.05, 0.15],
                    min_separation: 0.3,
                },
                ..base
            },
            Family::Mixed => ScenarioConfig {
                embedding_noise_sigma: 0.115,
                depth_noise_sigma: 0.04,
                layout: RandomLayout {
                    lateral_range: [-6.0, 6.0],
                    depth_range: [10.0, 30.0],
                    lateral_speed: [-0.2, 0.2],
                    forward_speed: [0.0, 0.2],
                    min_separation: 0.8,
                },
                ..base
            },
        }
    }
}

pub const TABLE2_SEEDS_PER_FAMILY: usize = 30;

/// The bundled ablation suite: every family for seeds
/// `base_seed .. base_seed + 30`.
pub fn table2_suite(base_seed: u64) -> Vec<(Family, ScenarioConfig)> {
    Family::ALL
        .iter()
        .flat_map(|&f| {
            (0..TABLE2_SEEDS_PER_FAMILY as u64).map(move |i| (f, f.scenario(base_seed + i)))
        })
        .collect()
}

/// Stage sets compared in the ablation.
pub fn ablation_stage_sets() -> Vec<Vec<Stage>> {
    vec![
        vec![Stage::Appearance],
        vec![Stage::Spatial],
        vec![Stage::Appearance, Stage::Spatial],
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub family: Family,
    pub stages: String,
    pub scenarios: usize,
    pub mean_aq: f64,
    pub mean_stq: f64,
    pub id_switches: usize,
}

fn stage_label(stages: &[Stage]) -> String {
    stages
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Mean association scores per family and stage set.
pub fn run_ablation(
    suite: &[(Family, ScenarioConfig)],
    base: &TrackerConfig,
    intrinsics: &CameraIntrinsics,
) -> Result<Vec<AblationRow>, AblationError> {
    let sequences: Vec<(Family, SimulatedSequence)> = suite
        .iter()
        .map(|(f, cfg)| generate(cfg, intrinsics).map(|s| (*f, s)))
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for family in Family::ALL {
        for stages in ablation_stage_sets() {
            let config = TrackerConfig {
                stages: stages.clone(),
                ..base.clone()
            };
            let mut row = AblationRow {
                family,
                stages: stage_label(&stages),
                scenarios: 0,
                mean_aq: 0.0,
                mean_stq: 0.0,
                id_switches: 0,
            };
            for (_, seq) in sequences.iter().filter(|(f, _)| *f == family) {
                let s = track_and_score(seq, &config, intrinsics)?;
                row.scenarios += 1;
                row.mean_aq += s.aq;
                row.mean_stq += s.stq;
                row.id_switches += s.id_switches;
            }
            if row.scenarios > 0 {
                row.mean_aq /= row.scenarios as f64;
                row.mean_stq /= row.scenarios as f64;
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AblationError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
}

/// Settings for synthetic panoptic prediction/truth pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PanopticPairConfig {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub objects: usize,
    pub thing_classes: Vec<u16>,
    /// Upper and lower background classes.
    pub stuff_classes: [u16; 2],
    /// Per-pixel probability of a random predicted label.
    pub label_noise: f64,
    /// Probability that a predicted object is dropped in a frame.
    pub miss_rate: f64,
    /// Relative standard deviation of the per-segment depth bias.
    pub depth_bias_sigma: f64,
    /// Relative standard deviation of per-pixel depth noise.
    pub depth_noise_sigma: f64,
}

impl Default for PanopticPairConfig {
    fn default() -> Self {
        Self {
            width: 32,
            height: 24,
            frames: 4,
            objects: 5,
            thing_classes: vec![11, 13],
            stuff_classes: [2, 0],
            label_noise: 0.03,
            miss_rate: 0.1,
            depth_bias_sigma: 0.2,
            depth_noise_sigma: 0.05,
        }
    }
}

struct Blob {
    class: u16,
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    w: usize,
    h: usize,
    depth: f64,
}

/// A truth sequence of moving boxes over two stuff regions, with a small
/// VOID patch, and a degraded prediction: jittered boxes, dropped objects,
/// label noise, one occasional id change, and depth with per-segment bias
/// plus pixel noise. Pure in `(cfg, seed)`.
pub fn panoptic_pair(cfg: &PanopticPairConfig, seed: u64) -> (Sequence, Sequence) {
    use crate::depthops::DepthMap;
    use crate::metrics::Frame;

    let mut rng = SimRng::new(seed, 3);
    let (w, h) = (cfg.width, cfg.height);
    let blobs: Vec<Blob> = (0..cfg.objects)
        .map(|_| Blob {
            class: cfg.thing_classes[rng.below(cfg.thing_classes.len())],
            x: rng.uniform_in([0.0, w as f64 * 0.8]),
            y: rng.uniform_in([0.0, h as f64 * 0.8]),
            vx: rng.uniform_in([-1.5, 1.5]),
            vy: rng.uniform_in([-0.5, 0.5]),
            w: 3 + rng.below(6),
            h: 3 + rng.below(6),
            depth: rng.uniform_in([5.0, 40.0]),
        })
        .collect();
    let void_x = rng.below(w.saturating_sub(3).max(1));
    let void_y = rng.below(h.saturating_sub(3).max(1));
    let renamed = rng.below(cfg.objects.max(1));
    let rename_from = 1 + rng.below(cfg.frames.max(1));

    let stuff_bias = [rng.normal(), rng.normal()];
    let object_bias: Vec<f64> = (0..cfg.objects).map(|_| rng.normal()).collect();

    let mut truth = Vec::with_capacity(cfg.frames);
    let mut pred = Vec::with_capacity(cfg.frames);
    for f in 0..cfg.frames {
        let mut t_map = PanopticMap::void(w, h);
        let mut p_map = PanopticMap::void(w, h);
        let mut t_depth = vec![0.0; w * h];
        let mut owner: Vec<Option<usize>> = vec![None; w * h];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let lower = usize::from(2 * y >= h);
                t_map.semantic[i] = cfg.stuff_classes[lower];
                p_map.semantic[i] = cfg.stuff_classes[lower];
                t_depth[i] = if lower == 1 { 4.0 + 60.0 / (1.0 + y as f64) } else { 80.0 };
            }
        }
        let paint = |map: &mut PanopticMap, owner: Option<&mut Vec<Option<usize>>>, depth: Option<&mut Vec<f64>>, b: &Blob, k: usize, dx: i64, dy: i64, id: u32| {
            let x0 = (b.x + b.vx * f as f64).round() as i64 + dx;
            let y0 = (b.y + b.vy * f as f64).round() as i64 + dy;
            let mut owner = owner;
            let mut depth = depth;
            for y in y0..y0 + b.h as i64 {
                for x in x0..x0 + b.w as i64 {
                    if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
                        continue;
                    }
                    let i = y as usize * w + x as usize;
                    map.semantic[i] = b.class;
                    map.instance[i] = id;
                    if let Some(o) = owner.as_deref_mut() {
                        o[i] = Some(k);
                    }
                    if let Some(d) = depth.as_deref_mut() {
                        d[i] = b.depth;
                    }
                }
            }
        };
        for (k, b) in blobs.iter().enumerate() {
            paint(&mut t_map, Some(&mut owner), Some(&mut t_depth), b, k, 0, 0, k as u32 + 1);
            let missed = rng.uniform() < cfg.miss_rate;
            let dx = rng.below(3) as i64 - 1;
            let dy = rng.below(3) as i64 - 1;
            if !missed {
                let id = if k == renamed && f >= rename_from { 100 } else { k as u32 + 1 };
                paint(&mut p_map, None, None, b, k, dx, dy, id);
            }
        }
        let mut t_valid = vec![true; w * h];
        for y in void_y..(void_y + 3).min(h) {
            for x in void_x..(void_x + 3).min(w) {
                t_map.set_void(y * w + x);
                t_valid[y * w + x] = false;
            }
        }
        let mut p_depth = vec![0.0; w * h];
        for i in 0..w * h {
            if rng.uniform() < cfg.label_noise {
                let classes: Vec<u16> = cfg.stuff_classes.iter().chain(&cfg.thing_classes).copied().collect();
                let c = classes[rng.below(classes.len())];
                p_map.semantic[i] = c;
                p_map.instance[i] = if cfg.thing_classes.contains(&c) { 1 + rng.below(cfg.objects.max(1)) as u32 } else { 0 };
            }
            let bias = match owner[i] {
                Some(k) => object_bias[k],
                None => stuff_bias[usize::from(2 * (i / w) >= h)],
            };
            let factor = 1.0 + cfg.depth_bias_sigma * bias + cfg.depth_noise_sigma * rng.normal();
            p_depth[i] = t_depth[i] * factor.max(0.01);
        }
        truth.push(Frame::with_depth(
            t_map,
            DepthMap::with_mask(w, h, t_depth, t_valid).expect("sizes match"),
        ));
        pred.push(Frame::with_depth(
            p_map,
            DepthMap::new(w, h, p_depth).expect("sizes match"),
        ));
    }
    (Sequence::new(pred), Sequence::new(truth))
}
