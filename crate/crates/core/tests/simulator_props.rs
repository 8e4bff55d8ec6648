use cascadetrack::simulator::{
    ablation_stage_sets, default_intrinsics, generate, random_track_ids, run_ablation,
    score_against_truth, table2_suite, track_and_score, Family, ObjectSpec, ScenarioConfig,
};
use cascadetrack::{Stage, TrackerConfig};
use proptest::prelude::*;

fn noisy(seed: u64, layout_seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        seed,
        layout_seed,
        num_frames: 30,
        embedding_noise_sigma: 0.2,
        depth_noise_sigma: 0.05,
        dropout: 0.1,
        ..ScenarioConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generation_is_deterministic(seed in any::<u64>(), layout in 0u64..1000) {
        let cam = default_intrinsics();
        let cfg = noisy(seed, layout);
        prop_assert_eq!(generate(&cfg, &cam).unwrap(), generate(&cfg, &cam).unwrap());
    }

    #[test]
    fn noise_seed_never_moves_objects(a in any::<u64>(), b in any::<u64>(), layout in 0u64..1000) {
        let cam = default_intrinsics();
        let x = generate(&noisy(a, layout), &cam).unwrap();
        let y = generate(&noisy(b, layout), &cam).unwrap();
        prop_assert_eq!(x.tracks.len(), y.tracks.len());
        for (s, t) in x.tracks.iter().zip(&y.tracks) {
            prop_assert_eq!(s.category, t.category);
            for (p, q) in s.states.iter().zip(&t.states) {
                prop_assert_eq!(p.bev, q.bev);
                prop_assert_eq!(p.center, q.center);
                prop_assert_eq!(p.depth, q.depth);
            }
        }
    }

    #[test]
    fn noiseless_scenarios_track_perfectly(layout in 0u64..10_000) {
        let cam = default_intrinsics();
        let cfg = ScenarioConfig { layout_seed: layout, num_frames: 50, ..ScenarioConfig::default() };
        let seq = generate(&cfg, &cam).unwrap();
        for stages in ablation_stage_sets() {
            let s = track_and_score(&seq, &TrackerConfig::with_stages(&stages), &cam).unwrap();
            prop_assert_eq!(s.aq, 1.0, "stages {:?}", stages);
            prop_assert_eq!(s.id_switches, 0);
        }
    }
}

#[test]
fn spatial_stage_recovers_identities_lost_by_appearance() {
    // Two same-class objects at distinct depths whose embeddings are
    // swamped by noise: the appearance stage cannot re-identify them, the
    // spatial fallback can.
    let cam = default_intrinsics();
    let cfg = ScenarioConfig {
        seed: 5,
        num_objects: 2,
        num_frames: 20,
        embedding_dim: 64,
        embedding_noise_sigma: 3.0,
        camera_speed: 0.0,
        objects: vec![
            ObjectSpec { category: 13, x: -1.0, z: 10.0, vx: 0.0, vz: 0.0, latent: None },
            ObjectSpec { category: 13, x: 1.0, z: 25.0, vx: 0.0, vz: 0.0, latent: None },
        ],
        ..ScenarioConfig::default()
    };
    let seq = generate(&cfg, &cam).unwrap();
    let am = track_and_score(&seq, &TrackerConfig::with_stages(&[Stage::Appearance]), &cam).unwrap();
    let cascade = track_and_score(
        &seq,
        &TrackerConfig::with_stages(&[Stage::Appearance, Stage::Spatial]),
        &cam,
    )
    .unwrap();
    assert!(am.aq < 0.5, "appearance-only AQ {}", am.aq);
    assert_eq!(cascade.aq, 1.0);
    assert_eq!(cascade.id_switches, 0);
}

#[test]
fn stress_families_separate_the_stages() {
    let cam = default_intrinsics();
    let rows = run_ablation(&table2_suite(0), &TrackerConfig::default(), &cam).unwrap();
    let aq = |f: Family, s: &str| {
        rows.iter()
            .find(|r| r.family == f && r.stages == s)
            .unwrap()
            .mean_aq
    };
    // Each stress family defeats one single stage and not the other.
    assert!(aq(Family::AppearanceStress, "sm") > aq(Family::AppearanceStress, "am") + 0.1);
    assert!(aq(Family::SpatialStress, "am") > aq(Family::SpatialStress, "sm") + 0.1);
    for f in [Family::AppearanceStress, Family::SpatialStress, Family::Mixed] {
        let c = aq(f, "am,sm");
        assert!(c >= aq(f, "am") && c >= aq(f, "sm"), "{}", f.name());
    }
}

#[test]
fn random_association_scores_poorly() {
    let cam = default_intrinsics();
    let seq = generate(&Family::Mixed.scenario(0), &cam).unwrap();
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let s = score_against_truth(&random_track_ids(&seq, seed), &seq);
        worst = worst.max(s.aq);
    }
    println!("random association: max AQ {worst:.3} over 100 seeds");
    assert!(worst < 0.2);
}
