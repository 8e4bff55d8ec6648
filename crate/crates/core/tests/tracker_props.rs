use std::collections::BTreeSet;

use cascadetrack::io::{self, DetectionFile, DetectionSequence, FrameDetections};
use cascadetrack::simulator::default_intrinsics;
use cascadetrack::tracker::{track_sequence, Assignment, TrackerState};
use cascadetrack::{Detection, Stage, TrackerConfig};
use proptest::prelude::*;

const DIM: usize = 4;

fn detection_strategy(categories: u32) -> impl Strategy<Value = Detection> {
    (
        prop::collection::vec(-1.0..1.0f64, DIM),
        0.0..1280.0f64,
        0.0..720.0f64,
        2.0..40.0f64,
        0..categories,
        0.0..=1.0f64,
    )
        .prop_map(|(mut kernel, u, v, depth, category, score)| {
            kernel[0] += 2.0;
            Detection {
                center: (u, v),
                kernel,
                mean_depth: depth,
                category,
                score,
            }
        })
}

fn frames_strategy() -> impl Strategy<Value = Vec<Vec<Detection>>> {
    prop::collection::vec(prop::collection::vec(detection_strategy(3), 0..8), 1..8)
}

fn stages_strategy() -> impl Strategy<Value = Vec<Stage>> {
    prop_oneof![
        Just(vec![Stage::Appearance]),
        Just(vec![Stage::Spatial]),
        Just(vec![Stage::Appearance, Stage::Spatial]),
        Just(vec![Stage::Spatial, Stage::Appearance]),
    ]
}

fn run(frames: &[Vec<Detection>], cfg: &TrackerConfig) -> Vec<Vec<Assignment>> {
    let intr = default_intrinsics();
    track_sequence(
        frames.iter().enumerate().map(|(f, d)| (f as u64, d.as_slice())),
        cfg,
        Some(&intr),
    )
    .unwrap()
}

fn new_ids(state: &TrackerState, frame: u64, dets: &[Detection], cfg: &TrackerConfig) -> usize {
    let mut s = state.clone();
    s.step(frame, dets, Some(&default_intrinsics()), cfg)
        .unwrap()
        .iter()
        .filter(|a| a.stage.is_none())
        .count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn identities_are_conserved(frames in frames_strategy(), stages in stages_strategy(), max_age in 1u32..4) {
        let cfg = TrackerConfig { stages, max_age, ..TrackerConfig::default() };
        let out = run(&frames, &cfg);
        let mut seen = BTreeSet::new();
        let mut last_new = 0;
        for frame in &out {
            let ids: BTreeSet<u64> = frame.iter().map(|a| a.track_id.0).collect();
            prop_assert_eq!(ids.len(), frame.len(), "id used twice in a frame");
            for a in frame {
                if a.stage.is_none() {
                    prop_assert!(!seen.contains(&a.track_id.0), "id recycled");
                    prop_assert!(a.track_id.0 > last_new);
                    last_new = a.track_id.0;
                } else {
                    prop_assert!(seen.contains(&a.track_id.0));
                }
            }
            seen.extend(ids);
        }
    }

    #[test]
    fn wider_gates_never_create_more_ids(
        prev in prop::collection::vec(detection_strategy(2), 0..8),
        cur in prop::collection::vec(detection_strategy(2), 0..8),
        am in (0.0..2.0f64, 0.0..2.0f64),
        sm in (0.0..30.0f64, 0.0..30.0f64),
    ) {
        let mut state = TrackerState::new();
        let cfg = TrackerConfig::with_stages(&[Stage::Appearance]);
        state.step(0, &prev, Some(&default_intrinsics()), &cfg).unwrap();
        let (am_lo, am_hi) = if am.0 <= am.1 { am } else { (am.1, am.0) };
        let (sm_lo, sm_hi) = if sm.0 <= sm.1 { sm } else { (sm.1, sm.0) };
        let at = |stages: &[Stage], am_gate, sm_gate| TrackerConfig {
            am_gate,
            sm_gate,
            ..TrackerConfig::with_stages(stages)
        };
        let am_only = [Stage::Appearance];
        let sm_only = [Stage::Spatial];
        prop_assert!(new_ids(&state, 1, &cur, &at(&am_only, am_hi, 2.0)) <= new_ids(&state, 1, &cur, &at(&am_only, am_lo, 2.0)));
        prop_assert!(new_ids(&state, 1, &cur, &at(&sm_only, 0.5, sm_hi)) <= new_ids(&state, 1, &cur, &at(&sm_only, 0.5, sm_lo)));
    }

    #[test]
    fn appearance_tracking_ignores_kernel_scale(
        frames in prop::collection::vec(
            prop::collection::vec(detection_strategy(1), 0..6).prop_map(|mut v| {
                for (i, d) in v.iter_mut().enumerate() {
                    d.category = i as u32;
                }
                v
            }),
            1..8,
        ),
        scale in prop::collection::vec(1e-3..1e3f64, 64),
    ) {
        let cfg = TrackerConfig::with_stages(&[Stage::Appearance]);
        let mut k = 0;
        let scaled: Vec<Vec<Detection>> = frames
            .iter()
            .map(|f| {
                f.iter()
                    .map(|d| {
                        k += 1;
                        let s = scale[k % scale.len()];
                        Detection { kernel: d.kernel.iter().map(|x| x * s).collect(), ..d.clone() }
                    })
                    .collect()
            })
            .collect();
        let ids = |out: Vec<Vec<Assignment>>| -> Vec<Vec<u64>> {
            out.into_iter().map(|f| f.into_iter().map(|a| a.track_id.0).collect()).collect()
        };
        prop_assert_eq!(ids(run(&frames, &cfg)), ids(run(&scaled, &cfg)));
    }

    #[test]
    fn serialized_detections_track_identically(frames in frames_strategy(), stages in stages_strategy()) {
        let cfg = TrackerConfig { stages, ..TrackerConfig::default() };
        let file = DetectionFile {
            kernel_dim: DIM,
            sequences: vec![DetectionSequence {
                id: "seq".into(),
                frames: frames
                    .iter()
                    .enumerate()
                    .map(|(f, d)| FrameDetections { frame: f as u64, detections: d.clone() })
                    .collect(),
            }],
        };
        let text = io::format_detections(&file).unwrap();
        let back = io::parse_detections(&text).unwrap();
        let reread: Vec<Vec<Detection>> = back.sequences[0].frames.iter().map(|f| f.detections.clone()).collect();
        prop_assert_eq!(&reread, &frames);
        prop_assert_eq!(run(&frames, &cfg), run(&reread, &cfg));
    }

    #[test]
    fn steps_never_depend_on_later_frames(frames in frames_strategy(), stages in stages_strategy(), cut in 0usize..8) {
        let cfg = TrackerConfig { stages, ..TrackerConfig::default() };
        let full = run(&frames, &cfg);
        let n = cut.min(frames.len());
        let prefix = run(&frames[..n], &cfg);
        prop_assert_eq!(&full[..n], &prefix[..]);
    }
}

#[test]
fn cold_start_issues_ids_in_detection_order() {
    let dets: Vec<Detection> = (0..5)
        .map(|i| Detection {
            center: (100.0 * i as f64, 300.0),
            kernel: vec![1.0, i as f64, 0.0, 0.5],
            mean_depth: 10.0 + i as f64,
            category: 0,
            score: 0.9,
        })
        .collect();
    let out = run(&[dets.clone(), dets], &TrackerConfig::default());
    let first: Vec<u64> = out[0].iter().map(|a| a.track_id.0).collect();
    let second: Vec<u64> = out[1].iter().map(|a| a.track_id.0).collect();
    assert_eq!(first, vec![1, 2, 3, 4, 5]);
    assert_eq!(second, first);
}
