use std::path::PathBuf;

use anyhow::{Context, Result};
use cascadetrack::io::{self, DetectionFile, DetectionSequence, FrameDetections, TruthSidecar};
use cascadetrack::simulator::{
    default_intrinsics, generate, run_ablation, table2_suite, AblationRow, Family, ScenarioConfig,
};
use cascadetrack::CameraIntrinsics;
use clap::{Args, ValueEnum};
use serde_json::json;

use crate::config::{resolve_tracker, FileConfig, TrackerFlags};
use crate::output::{OutputSet, RunManifest, Timings};
use crate::plot;
use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    /// Appearance-stress, spatial-stress and mixed families, 30 seeds each.
    Table2,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Scenario description (TOML).
    #[arg(long, conflicts_with = "suite", required_unless_present = "suite")]
    pub scenario: Option<PathBuf>,
    /// Bundled scenario suite; also runs the stage ablation.
    #[arg(long, value_enum)]
    pub suite: Option<Suite>,
    /// Noise seed of the scenario, or base seed of the suite.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Camera intrinsics (TOML); a 1280x720 camera by default.
    #[arg(long)]
    pub intrinsics: Option<PathBuf>,
    /// Tracker settings for the suite ablation.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write SVG/CSV plots of the ablation.
    #[arg(long)]
    pub plots: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct SimulateOutcome {
    pub outputs: Vec<PathBuf>,
    pub ablation: Option<Vec<AblationRow>>,
}

pub fn suite_sequence_name(family: Family, seed: u64) -> String {
    format!("{}-s{seed}", family.name())
}

fn build_files(
    scenarios: &[(String, ScenarioConfig)],
    intrinsics: &CameraIntrinsics,
) -> Result<(DetectionFile, Vec<TruthSidecar>)> {
    let kernel_dim = scenarios.first().map_or(1, |s| s.1.embedding_dim);
    let mut dets = DetectionFile::new(kernel_dim);
    let mut truth = Vec::new();
    for (name, cfg) in scenarios {
        if cfg.embedding_dim != kernel_dim {
            return Err(UsageError("all scenarios of a run must share embedding_dim".into()).into());
        }
        let seq = generate(cfg, intrinsics).with_context(|| format!("scenario {name}"))?;
        dets.sequences.push(DetectionSequence {
            id: name.clone(),
            frames: seq
                .frames
                .into_iter()
                .enumerate()
                .map(|(f, detections)| FrameDetections {
                    frame: f as u64,
                    detections,
                })
                .collect(),
        });
        truth.push(TruthSidecar {
            sequence: name.clone(),
            scenario: cfg.clone(),
            intrinsics: *intrinsics,
            det_objects: seq.det_objects,
            tracks: seq.tracks,
        });
    }
    Ok((dets, truth))
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<SimulateOutcome> {
    let intrinsics = match &args.intrinsics {
        Some(p) => io::read_intrinsics(p)?,
        None => default_intrinsics(),
    };
    let mut timings = Timings::default();
    let mut manifest_config = serde_json::Map::new();
    let scenarios: Vec<(String, ScenarioConfig)> = match (&args.scenario, args.suite) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading scenario {}", path.display()))?;
            let mut cfg: ScenarioConfig = toml::from_str(&text)
                .map_err(|e| UsageError(format!("scenario {}: {e}", path.display())))?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            manifest_config.insert("scenario".into(), serde_json::to_value(&cfg)?);
            vec![("scenario".to_string(), cfg)]
        }
        (None, Some(Suite::Table2)) => {
            let base = args.seed.unwrap_or(0);
            manifest_config.insert("suite".into(), json!("table2"));
            table2_suite(base)
                .into_iter()
                .map(|(f, cfg)| (suite_sequence_name(f, cfg.seed), cfg))
                .collect()
        }
        _ => return Err(UsageError("exactly one of --scenario and --suite is required".into()).into()),
    };
    manifest_config.insert("intrinsics".into(), serde_json::to_value(intrinsics)?);

    let (dets, truth) = timings.time("generate", || build_files(&scenarios, &intrinsics))?;

    let ablation = match args.suite {
        Some(Suite::Table2) => {
            let file_cfg = FileConfig::load(args.config.as_deref())?;
            let base = resolve_tracker(&file_cfg, &TrackerFlags::default())?;
            manifest_config.insert("tracker".into(), serde_json::to_value(&base)?);
            let suite = table2_suite(args.seed.unwrap_or(0));
            Some(timings.time("ablation", || run_ablation(&suite, &base, &intrinsics))?)
        }
        None => None,
    };

    let mut set = OutputSet::new();
    set.create_dir(&args.out)?;
    timings.time("write", || -> Result<()> {
        set.write_str(&args.out.join("detections.txt"), &io::format_detections(&dets)?)?;
        set.write_str(&args.out.join("truth.json"), &io::format_truth(&truth)?)?;
        set.write_str(
            &args.out.join("intrinsics.toml"),
            &io::format_intrinsics(&intrinsics),
        )?;
        if let Some(rows) = &ablation {
            set.write_str(&args.out.join("ablation.json"), &io::format_json(rows)?)?;
            if args.plots {
                let bars: Vec<(String, f64)> = rows
                    .iter()
                    .map(|r| (format!("{} {}", r.family.name(), r.stages), r.mean_aq))
                    .collect();
                set.write_str(
                    &args.out.join("ablation.svg"),
                    &plot::bar_chart("Mean AQ per family and stage set", &bars),
                )?;
                set.write_str(
                    &args.out.join("ablation.csv"),
                    &plot::bar_csv(("family_stages", "mean_aq"), &bars),
                )?;
            }
        }
        Ok(())
    })?;

    let mut manifest = RunManifest::new("simulate", serde_json::Value::Object(manifest_config));
    manifest.seed = Some(args.seed.unwrap_or_else(|| scenarios.first().map_or(0, |s| s.1.seed)));
    if let Some(p) = &args.scenario {
        manifest = manifest.input(p);
    }
    if let Some(p) = &args.intrinsics {
        manifest = manifest.input(p);
    }
    let outputs = manifest.finish(set, &args.out.join("manifest.json"), timings)?;
    Ok(SimulateOutcome { outputs, ablation })
}
