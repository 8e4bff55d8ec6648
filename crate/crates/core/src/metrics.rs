//! Video panoptic quality (VPQ), its depth-aware variant (DVPQ) and
//! segmentation-and-tracking quality (STQ).
//!
//! Conventions shared by all evaluators:
//! - a segment is a `(class, instance)` pair; segments of a window of frames
//!   are glued across frames into tubes;
//! - pixels VOID in the truth are dropped from IoU unions, and a predicted
//!   segment lying mostly (> 50 %) on truth VOID is never a false positive;
//! - counts are integers, only the final ratios are floating point, and all
//!   sums run in sorted key order so results are bit-reproducible.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::depthops::DepthMap;

/// Reserved semantic id for unlabeled pixels.
pub const VOID_CLASS: u16 = 0xFFFF;

/// Segments must overlap with IoU strictly above this to match.
pub const MATCH_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("missing depth for sequence {sequence} frame {frame} ({side})")]
    MissingDepth {
        sequence: usize,
        frame: usize,
        side: &'static str,
    },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Per-pixel semantic class and instance id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanopticMap {
    pub width: usize,
    pub height: usize,
    pub semantic: Vec<u16>,
    /// 0 for stuff and void.
    pub instance: Vec<u32>,
}

impl PanopticMap {
    pub fn new(
        width: usize,
        height: usize,
        semantic: Vec<u16>,
        instance: Vec<u32>,
    ) -> Result<Self, MetricsError> {
        let n = width * height;
        if semantic.len() != n || instance.len() != n {
            return Err(MetricsError::ShapeMismatch(format!(
                "{width}x{height} map needs {n} labels, got {} semantic / {} instance",
                semantic.len(),
                instance.len()
            )));
        }
        Ok(Self {
            width,
            height,
            semantic,
            instance,
        })
    }

    pub fn void(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            semantic: vec![VOID_CLASS; width * height],
            instance: vec![0; width * height],
        }
    }

    /// Builds a map from `(class, instance)` labels.
    pub fn from_labels(
        width: usize,
        height: usize,
        labels: &[(u16, u32)],
    ) -> Result<Self, MetricsError> {
        Self::new(
            width,
            height,
            labels.iter().map(|l| l.0).collect(),
            labels.iter().map(|l| l.1).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.semantic.len()
    }

    pub fn is_empty(&self) -> bool {
        self.semantic.is_empty()
    }

    #[inline]
    pub fn is_void(&self, i: usize) -> bool {
        self.semantic[i] == VOID_CLASS
    }

    pub fn set_void(&mut self, i: usize) {
        self.semantic[i] = VOID_CLASS;
        self.instance[i] = 0;
    }

    #[inline]
    fn key(&self, i: usize) -> u64 {
        segment_key(self.semantic[i], self.instance[i])
    }
}

#[inline]
fn segment_key(class: u16, instance: u32) -> u64 {
    ((class as u64) << 32) | instance as u64
}

#[inline]
fn key_class(key: u64) -> u16 {
    (key >> 32) as u16
}

/// One annotated frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub panoptic: PanopticMap,
    pub depth: Option<DepthMap>,
}

impl Frame {
    pub fn new(panoptic: PanopticMap) -> Self {
        Self {
            panoptic,
            depth: None,
        }
    }

    pub fn with_depth(panoptic: PanopticMap, depth: DepthMap) -> Self {
        Self {
            panoptic,
            depth: Some(depth),
        }
    }
}

/// Ordered frames of one video; truth and prediction use the same type.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sequence {
    pub frames: Vec<Frame>,
}

impl Sequence {
    pub fn new(frames: Vec<Frame>) -> Self {
        Self { frames }
    }

    pub fn from_maps(maps: Vec<PanopticMap>) -> Self {
        Self {
            frames: maps.into_iter().map(Frame::new).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Which semantic ids are countable "things".
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassPartition {
    pub things: BTreeSet<u16>,
}

impl ClassPartition {
    pub fn new(things: impl IntoIterator<Item = u16>) -> Self {
        Self {
            things: things.into_iter().collect(),
        }
    }

    /// Cityscapes train ids 11..=18 (person .. bicycle).
    pub fn cityscapes() -> Self {
        Self::new(11..=18)
    }

    pub fn is_thing(&self, class: u16) -> bool {
        self.things.contains(&class)
    }
}

/// Matching counts for one class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ClassStat {
    pub iou_sum: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ClassStat {
    fn denominator(&self) -> f64 {
        self.tp as f64 + 0.5 * self.fp as f64 + 0.5 * self.fn_ as f64
    }
}

/// Per-class statistics accumulated over windows and sequences.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PqStat {
    pub classes: BTreeMap<u16, ClassStat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassScore {
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PqResult {
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
    pub pq_thing: Option<f64>,
    pub pq_stuff: Option<f64>,
    pub per_class: BTreeMap<u16, ClassScore>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl PqStat {
    pub fn merge(&mut self, other: &PqStat) {
        for (&class, s) in &other.classes {
            let e = self.classes.entry(class).or_default();
            e.iou_sum += s.iou_sum;
            e.tp += s.tp;
            e.fp += s.fp;
            e.fn_ += s.fn_;
        }
    }

    /// Per-class PQ averaged over classes with any TP, FP or FN.
    pub fn result(&self, partition: &ClassPartition) -> PqResult {
        let mut per_class = BTreeMap::new();
        for (&class, s) in &self.classes {
            if s.tp + s.fp + s.fn_ == 0 {
                continue;
            }
            let sq = if s.tp > 0 { s.iou_sum / s.tp as f64 } else { 0.0 };
            let rq = s.tp as f64 / s.denominator();
            per_class.insert(
                class,
                ClassScore {
                    pq: s.iou_sum / s.denominator(),
                    sq,
                    rq,
                    tp: s.tp,
                    fp: s.fp,
                    fn_: s.fn_,
                },
            );
        }
        let all = |f: fn(&ClassScore) -> f64| mean(per_class.values().map(f)).unwrap_or(0.0);
        PqResult {
            pq: all(|c| c.pq),
            sq: all(|c| c.sq),
            rq: all(|c| c.rq),
            pq_thing: mean(
                per_class
                    .iter()
                    .filter(|(c, _)| partition.is_thing(**c))
                    .map(|(_, s)| s.pq),
            ),
            pq_stuff: mean(
                per_class
                    .iter()
                    .filter(|(c, _)| !partition.is_thing(**c))
                    .map(|(_, s)| s.pq),
            ),
            per_class,
        }
    }
}

fn check_same_shape(a: &PanopticMap, b: &PanopticMap, what: &str) -> Result<(), MetricsError> {
    if a.width != b.width || a.height != b.height {
        return Err(MetricsError::ShapeMismatch(format!(
            "{what}: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

/// Adds the matching statistics of one tube window to `stat`.
pub fn accumulate_window(
    pred: &[&PanopticMap],
    truth: &[&PanopticMap],
    stat: &mut PqStat,
) -> Result<(), MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::ShapeMismatch(format!(
            "{} predicted frames vs {} truth frames",
            pred.len(),
            truth.len()
        )));
    }
    let mut pred_area: HashMap<u64, u64> = HashMap::new();
    let mut truth_area: HashMap<u64, u64> = HashMap::new();
    let mut pred_on_void: HashMap<u64, u64> = HashMap::new();
    let mut overlap: HashMap<(u64, u64), u64> = HashMap::new();
    for (f, (p, t)) in pred.iter().zip(truth).enumerate() {
        check_same_shape(p, t, &format!("frame {f}"))?;
        for i in 0..p.len() {
            let p_void = p.is_void(i);
            let t_void = t.is_void(i);
            if !p_void {
                *pred_area.entry(p.key(i)).or_default() += 1;
            }
            if !t_void {
                *truth_area.entry(t.key(i)).or_default() += 1;
            }
            match (p_void, t_void) {
                (false, false) => *overlap.entry((p.key(i), t.key(i))).or_default() += 1,
                (false, true) => *pred_on_void.entry(p.key(i)).or_default() += 1,
                _ => {}
            }
        }
    }

    let mut pairs: Vec<((u64, u64), u64)> = overlap
        .into_iter()
        .filter(|((pk, tk), _)| key_class(*pk) == key_class(*tk))
        .collect();
    pairs.sort_unstable();

    let mut matched_pred: BTreeSet<u64> = BTreeSet::new();
    let mut matched_truth: BTreeSet<u64> = BTreeSet::new();
    for ((pk, tk), inter) in pairs {
        let union = pred_area[&pk] - pred_on_void.get(&pk).copied().unwrap_or(0) + truth_area[&tk]
            - inter;
        let iou = inter as f64 / union as f64;
        if iou > MATCH_IOU {
            let s = stat.classes.entry(key_class(tk)).or_default();
            s.tp += 1;
            s.iou_sum += iou;
            matched_pred.insert(pk);
            matched_truth.insert(tk);
        }
    }

    let mut truth_keys: Vec<u64> = truth_area.keys().copied().collect();
    truth_keys.sort_unstable();
    for tk in truth_keys {
        if !matched_truth.contains(&tk) {
            stat.classes.entry(key_class(tk)).or_default().fn_ += 1;
        }
    }
    let mut pred_keys: Vec<(u64, u64)> = pred_area.into_iter().collect();
    pred_keys.sort_unstable();
    for (pk, area) in pred_keys {
        if matched_pred.contains(&pk) {
            continue;
        }
        let on_void = pred_on_void.get(&pk).copied().unwrap_or(0);
        if 2 * on_void > area {
            continue;
        }
        stat.classes.entry(key_class(pk)).or_default().fp += 1;
    }
    Ok(())
}

/// Panoptic quality of a list of frames evaluated as a single tube window.
pub fn pq(
    pred: &[PanopticMap],
    truth: &[PanopticMap],
    partition: &ClassPartition,
) -> Result<PqResult, MetricsError> {
    let p: Vec<&PanopticMap> = pred.iter().collect();
    let t: Vec<&PanopticMap> = truth.iter().collect();
    let mut stat = PqStat::default();
    accumulate_window(&p, &t, &mut stat)?;
    Ok(stat.result(partition))
}

/// Statistics of all length-`k` windows (stride 1) over all sequences.
/// Sequences shorter than `k` contribute nothing. Returns the number of
/// windows visited alongside the statistics.
pub fn windowed_stat(
    pred: &[Vec<&PanopticMap>],
    truth: &[Vec<&PanopticMap>],
    k: usize,
) -> Result<(PqStat, usize), MetricsError> {
    let mut stat = PqStat::default();
    let mut windows = 0;
    for (p, t) in pred.iter().zip(truth) {
        if p.len() != t.len() {
            return Err(MetricsError::ShapeMismatch(format!(
                "sequence lengths differ: {} vs {}",
                p.len(),
                t.len()
            )));
        }
        if p.len() < k {
            continue;
        }
        for start in 0..=(p.len() - k) {
            accumulate_window(&p[start..start + k], &t[start..start + k], &mut stat)?;
            windows += 1;
        }
    }
    Ok((stat, windows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DvpqConfig {
    pub window_sizes: Vec<usize>,
    /// Absolute relative depth error thresholds; `f64::INFINITY` disables
    /// voiding.
    pub depth_thresholds: Vec<f64>,
    pub partition: ClassPartition,
}

impl Default for DvpqConfig {
    fn default() -> Self {
        Self {
            window_sizes: vec![1, 2, 3, 4],
            depth_thresholds: vec![0.10, 0.25, 0.50],
            partition: ClassPartition::cityscapes(),
        }
    }
}

impl DvpqConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.window_sizes.is_empty() || self.window_sizes.contains(&0) {
            return Err(MetricsError::InvalidConfig(
                "window sizes must be non-empty and at least 1".into(),
            ));
        }
        if self.depth_thresholds.is_empty() || self.depth_thresholds.iter().any(|l| !(*l > 0.0)) {
            return Err(MetricsError::InvalidConfig(
                "depth thresholds must be non-empty and positive".into(),
            ));
        }
        Ok(())
    }
}

fn serialize_threshold<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

/// Score of one `(k, λ)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DvpqCell {
    pub k: usize,
    #[serde(serialize_with = "serialize_threshold")]
    pub lambda: f64,
    pub windows: usize,
    pub pq: f64,
    pub pq_thing: Option<f64>,
    pub pq_stuff: Option<f64>,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DvpqReport {
    pub dvpq: f64,
    pub dvpq_thing: Option<f64>,
    pub dvpq_stuff: Option<f64>,
    pub cells: Vec<DvpqCell>,
}

impl DvpqReport {
    pub fn cell(&self, k: usize, lambda: f64) -> Option<&DvpqCell> {
        self.cells.iter().find(|c| c.k == k && c.lambda == lambda)
    }

    /// Mean over window sizes of the cells at one threshold.
    pub fn at_threshold(&self, lambda: f64) -> Option<f64> {
        mean(self.cells.iter().filter(|c| c.lambda == lambda).map(|c| c.pq))
    }
}

/// Voids predicted pixels whose absolute relative depth error exceeds
/// `lambda`. Pixels without valid truth depth are left alone; a valid truth
/// pixel without valid predicted depth counts as an error.
pub fn void_by_depth(
    pred: &PanopticMap,
    pred_depth: &DepthMap,
    truth_depth: &DepthMap,
    lambda: f64,
) -> Result<PanopticMap, MetricsError> {
    let mut out = pred.clone();
    if lambda.is_infinite() {
        return Ok(out);
    }
    for d in [pred_depth, truth_depth] {
        if d.width != pred.width || d.height != pred.height {
            return Err(MetricsError::ShapeMismatch(format!(
                "depth {}x{} vs panoptic {}x{}",
                d.width, d.height, pred.width, pred.height
            )));
        }
    }
    for i in 0..out.len() {
        let t = truth_depth.values[i];
        if !truth_depth.valid[i] || !(t > 0.0) {
            continue;
        }
        let p = pred_depth.values[i];
        let inlier = pred_depth.valid[i] && (p - t).abs() / t <= lambda;
        if !inlier {
            out.set_void(i);
        }
    }
    Ok(out)
}

fn check_sequences(pred: &[Sequence], truth: &[Sequence]) -> Result<(), MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::ShapeMismatch(format!(
            "{} predicted sequences vs {} truth sequences",
            pred.len(),
            truth.len()
        )));
    }
    for (s, (p, t)) in pred.iter().zip(truth).enumerate() {
        if p.len() != t.len() {
            return Err(MetricsError::ShapeMismatch(format!(
                "sequence {s}: {} predicted frames vs {} truth frames",
                p.len(),
                t.len()
            )));
        }
        for (f, (pf, tf)) in p.frames.iter().zip(&t.frames).enumerate() {
            check_same_shape(&pf.panoptic, &tf.panoptic, &format!("sequence {s} frame {f}"))?;
        }
    }
    Ok(())
}

/// Depth-aware video panoptic quality over aligned sequences.
///
/// For every threshold λ the prediction is voided where its depth error
/// exceeds λ, then for every window size k the statistics of all windows of
/// all sequences are pooled into one PQ. The final score is the mean over
/// all cells that saw at least one window.
pub fn dvpq(
    pred: &[Sequence],
    truth: &[Sequence],
    config: &DvpqConfig,
) -> Result<DvpqReport, MetricsError> {
    config.validate()?;
    check_sequences(pred, truth)?;
    let truth_maps: Vec<Vec<&PanopticMap>> = truth
        .iter()
        .map(|s| s.frames.iter().map(|f| &f.panoptic).collect())
        .collect();

    let mut cells = Vec::new();
    for &lambda in &config.depth_thresholds {
        let voided: Vec<Vec<PanopticMap>> = if lambda.is_infinite() {
            Vec::new()
        } else {
            let mut out = Vec::with_capacity(pred.len());
            for (s, (ps, ts)) in pred.iter().zip(truth).enumerate() {
                let mut frames = Vec::with_capacity(ps.len());
                for (f, (pf, tf)) in ps.frames.iter().zip(&ts.frames).enumerate() {
                    let pd = pf.depth.as_ref().ok_or(MetricsError::MissingDepth {
                        sequence: s,
                        frame: f,
                        side: "prediction",
                    })?;
                    let td = tf.depth.as_ref().ok_or(MetricsError::MissingDepth {
                        sequence: s,
                        frame: f,
                        side: "truth",
                    })?;
                    frames.push(void_by_depth(&pf.panoptic, pd, td, lambda)?);
                }
                out.push(frames);
            }
            out
        };
        let pred_maps: Vec<Vec<&PanopticMap>> = if lambda.is_infinite() {
            pred.iter()
                .map(|s| s.frames.iter().map(|f| &f.panoptic).collect())
                .collect()
        } else {
            voided.iter().map(|s| s.iter().collect()).collect()
        };

        for &k in &config.window_sizes {
            let (stat, windows) = windowed_stat(&pred_maps, &truth_maps, k)?;
            if windows == 0 {
                continue;
            }
            let res = stat.result(&config.partition);
            let totals = stat.classes.values().fold((0, 0, 0), |acc, s| {
                (acc.0 + s.tp, acc.1 + s.fp, acc.2 + s.fn_)
            });
            cells.push(DvpqCell {
                k,
                lambda,
                windows,
                pq: res.pq,
                pq_thing: res.pq_thing,
                pq_stuff: res.pq_stuff,
                tp: totals.0,
                fp: totals.1,
                fn_: totals.2,
            });
        }
    }

    Ok(DvpqReport {
        dvpq: mean(cells.iter().map(|c| c.pq)).unwrap_or(0.0),
        dvpq_thing: mean(cells.iter().filter_map(|c| c.pq_thing)),
        dvpq_stuff: mean(cells.iter().filter_map(|c| c.pq_stuff)),
        cells,
    })
}

/// Plain video panoptic quality: DVPQ with depth voiding disabled.
pub fn vpq(
    pred: &[Sequence],
    truth: &[Sequence],
    window_sizes: &[usize],
    partition: &ClassPartition,
) -> Result<DvpqReport, MetricsError> {
    dvpq(
        pred,
        truth,
        &DvpqConfig {
            window_sizes: window_sizes.to_vec(),
            depth_thresholds: vec![f64::INFINITY],
            partition: partition.clone(),
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StqReport {
    pub stq: f64,
    pub aq: f64,
    pub sq: f64,
    pub class_iou: BTreeMap<u16, f64>,
    pub truth_tracks: usize,
}

/// Segmentation and tracking quality, `sqrt(AQ · SQ)`.
///
/// SQ is the mean IoU over semantic classes, pooled over every frame of
/// every sequence. AQ averages, over ground-truth tracks `g`,
/// `(1/|g|) Σ_p |p ∩ g| · IoU(p, g)` where `p` ranges over predicted tracks
/// of the same sequence and tubes span the whole sequence. Tracks are the
/// non-zero instances of thing classes; pixels VOID in the truth are ignored.
/// With no ground-truth track, AQ is 1 if nothing was predicted and 0
/// otherwise.
pub fn stq(
    pred: &[Sequence],
    truth: &[Sequence],
    partition: &ClassPartition,
) -> Result<StqReport, MetricsError> {
    check_sequences(pred, truth)?;

    let mut class_inter: HashMap<u16, u64> = HashMap::new();
    let mut class_pred: HashMap<u16, u64> = HashMap::new();
    let mut class_truth: HashMap<u16, u64> = HashMap::new();

    let mut aq_sum = 0.0;
    let mut truth_tracks = 0usize;
    let mut any_pred_track = false;

    for (ps, ts) in pred.iter().zip(truth) {
        let mut pred_size: HashMap<u64, u64> = HashMap::new();
        let mut truth_size: HashMap<u64, u64> = HashMap::new();
        let mut tpa: HashMap<(u64, u64), u64> = HashMap::new();
        for (pf, tf) in ps.frames.iter().zip(&ts.frames) {
            let (p, t) = (&pf.panoptic, &tf.panoptic);
            for i in 0..p.len() {
                if t.is_void(i) {
                    continue;
                }
                let tc = t.semantic[i];
                let pc = p.semantic[i];
                *class_truth.entry(tc).or_default() += 1;
                if !p.is_void(i) {
                    *class_pred.entry(pc).or_default() += 1;
                    if pc == tc {
                        *class_inter.entry(tc).or_default() += 1;
                    }
                }
                let p_track = (!p.is_void(i) && partition.is_thing(pc) && p.instance[i] != 0)
                    .then(|| p.key(i));
                let t_track = (partition.is_thing(tc) && t.instance[i] != 0).then(|| t.key(i));
                if let Some(pk) = p_track {
                    *pred_size.entry(pk).or_default() += 1;
                }
                if let Some(tk) = t_track {
                    *truth_size.entry(tk).or_default() += 1;
                }
                if let (Some(pk), Some(tk)) = (p_track, t_track) {
                    *tpa.entry((tk, pk)).or_default() += 1;
                }
            }
        }
        any_pred_track |= !pred_size.is_empty();

        let mut per_truth: BTreeMap<u64, f64> = truth_size.keys().map(|&k| (k, 0.0)).collect();
        let mut overlaps: Vec<((u64, u64), u64)> = tpa.into_iter().collect();
        overlaps.sort_unstable();
        for ((tk, pk), inter) in overlaps {
            let union = pred_size[&pk] + truth_size[&tk] - inter;
            *per_truth.get_mut(&tk).expect("track present") +=
                inter as f64 * (inter as f64 / union as f64);
        }
        for (tk, acc) in per_truth {
            aq_sum += acc / truth_size[&tk] as f64;
            truth_tracks += 1;
        }
    }

    let aq = if truth_tracks > 0 {
        aq_sum / truth_tracks as f64
    } else if any_pred_track {
        0.0
    } else {
        1.0
    };

    let mut classes: BTreeSet<u16> = class_truth.keys().copied().collect();
    classes.extend(class_pred.keys().copied());
    let mut class_iou = BTreeMap::new();
    for c in classes {
        let inter = class_inter.get(&c).copied().unwrap_or(0);
        let union = class_truth.get(&c).copied().unwrap_or(0) + class_pred.get(&c).copied().unwrap_or(0)
            - inter;
        if union > 0 {
            class_iou.insert(c, inter as f64 / union as f64);
        }
    }
    let sq = mean(class_iou.values().copied()).unwrap_or(0.0);
    Ok(StqReport {
        stq: (aq * sq).sqrt(),
        aq,
        sq,
        class_iou,
        truth_tracks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const V: (u16, u32) = (VOID_CLASS, 0);

    fn map(w: usize, h: usize, labels: &[(u16, u32)]) -> PanopticMap {
        PanopticMap::from_labels(w, h, labels).unwrap()
    }

    fn things() -> ClassPartition {
        ClassPartition::new([1])
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let t = vec![
            map(2, 2, &[(1, 1), (1, 1), (2, 0), (2, 0)]),
            map(2, 2, &[(1, 1), (2, 0), (2, 0), V]),
        ];
        let r = pq(&t, &t, &things()).unwrap();
        assert_eq!(r.pq, 1.0);
        assert_eq!(r.pq_thing, Some(1.0));
        assert_eq!(r.pq_stuff, Some(1.0));
    }

    #[test]
    fn all_void_prediction_scores_zero() {
        let t = vec![map(2, 1, &[(1, 1), (2, 0)])];
        let p = vec![PanopticMap::void(2, 1)];
        let r = pq(&p, &t, &things()).unwrap();
        assert_eq!(r.pq, 0.0);
        assert_eq!(r.per_class[&1].fn_, 1);
        assert_eq!(r.per_class[&1].fp, 0);
    }

    #[test]
    fn prediction_on_truth_void_is_not_false_positive() {
        let t = vec![map(4, 1, &[(1, 1), (1, 1), V, V])];
        let p = vec![map(4, 1, &[(1, 1), (1, 1), (1, 2), (1, 2)])];
        let r = pq(&p, &t, &things()).unwrap();
        assert_eq!(r.pq, 1.0);
        // Void pixels are also dropped from the union.
        let p = vec![map(4, 1, &[(1, 1), (1, 1), (1, 1), V])];
        let r = pq(&p, &t, &things()).unwrap();
        assert_eq!(r.pq, 1.0);
    }

    #[test]
    fn iou_exactly_half_does_not_match() {
        let t = vec![map(4, 1, &[(1, 1), (1, 1), (2, 0), (2, 0)])];
        let p = vec![map(4, 1, &[(1, 1), (2, 0), (2, 0), (2, 0)])];
        let r = pq(&p, &t, &things()).unwrap();
        assert_eq!(r.per_class[&1].tp, 0);
        assert_eq!(r.per_class[&1].fp, 1);
        assert_eq!(r.per_class[&1].fn_, 1);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let t = vec![map(2, 1, &[(1, 1), (2, 0)])];
        let p = vec![map(1, 2, &[(1, 1), (2, 0)])];
        assert!(matches!(pq(&p, &t, &things()), Err(MetricsError::ShapeMismatch(_))));
    }

    #[test]
    fn missing_depth_is_an_error() {
        let t = Sequence::from_maps(vec![map(1, 1, &[(2, 0)])]);
        let cfg = DvpqConfig {
            window_sizes: vec![1],
            depth_thresholds: vec![0.25],
            partition: things(),
        };
        assert!(matches!(
            dvpq(std::slice::from_ref(&t), std::slice::from_ref(&t), &cfg),
            Err(MetricsError::MissingDepth { .. })
        ));
        // Without finite thresholds depth is not needed.
        let r = vpq(std::slice::from_ref(&t), std::slice::from_ref(&t), &[1], &things()).unwrap();
        assert_eq!(r.dvpq, 1.0);
    }

    #[test]
    fn short_sequences_are_skipped() {
        let t = Sequence::from_maps(vec![map(1, 1, &[(2, 0)]), map(1, 1, &[(2, 0)])]);
        let r = vpq(std::slice::from_ref(&t), std::slice::from_ref(&t), &[1, 3], &things()).unwrap();
        assert_eq!(r.cells.len(), 1);
        assert_eq!(r.cells[0].windows, 2);
    }

    #[test]
    fn stq_perfect_and_disjoint() {
        let t = Sequence::from_maps(vec![
            map(2, 1, &[(1, 1), (1, 2)]),
            map(2, 1, &[(1, 1), (1, 2)]),
        ]);
        let r = stq(std::slice::from_ref(&t), std::slice::from_ref(&t), &things()).unwrap();
        assert_eq!((r.stq, r.aq, r.sq), (1.0, 1.0, 1.0));

        // Correct class, but instances never overlap any truth track.
        let p = Sequence::from_maps(vec![map(2, 1, &[(1, 0), (1, 0)]), map(2, 1, &[(1, 0), (1, 0)])]);
        let r = stq(&[p], &[t], &things()).unwrap();
        assert_eq!(r.aq, 0.0);
        assert_eq!(r.sq, 1.0);
        assert_eq!(r.stq, 0.0);
    }
}
