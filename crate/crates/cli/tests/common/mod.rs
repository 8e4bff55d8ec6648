#![allow(dead_code)]

use std::path::{Path, PathBuf};

use cascadetrack::io::{self, SequenceDir};
use cascadetrack::metrics::Sequence;
use cascadetrack_cli::config::TrackerFlags;
use cascadetrack_cli::{EvaluateArgs, Mode, SimulateArgs, TrackArgs};

pub fn simulate_args(out: &Path) -> SimulateArgs {
    SimulateArgs {
        scenario: None,
        suite: None,
        seed: None,
        intrinsics: None,
        config: None,
        plots: false,
        out: out.to_path_buf(),
    }
}

pub fn track_args(dir: &Path, stages: &str, out: &Path) -> TrackArgs {
    TrackArgs {
        detections: dir.join("detections.txt"),
        intrinsics: Some(dir.join("intrinsics.toml")),
        config: None,
        tracker: TrackerFlags {
            stages: Some(stages.into()),
            ..TrackerFlags::default()
        },
        truth: Some(dir.join("truth.json")),
        out: out.to_path_buf(),
    }
}

pub fn evaluate_args(mode: Mode, pred: &Path, truth: &Path, out: &Path) -> EvaluateArgs {
    EvaluateArgs {
        mode,
        pred: pred.to_path_buf(),
        truth: truth.to_path_buf(),
        lambda_grid: None,
        k_grid: None,
        things: None,
        config: None,
        plots: false,
        out: out.to_path_buf(),
    }
}

/// Writes one sequence per entry under `root`, frames numbered from 0.
pub fn write_sequences(root: &Path, seqs: &[(&str, &Sequence)]) -> PathBuf {
    let dir = SequenceDir {
        sequences: seqs
            .iter()
            .map(|(name, s)| (name.to_string(), (0..s.len() as u64).collect(), (*s).clone()))
            .collect(),
    };
    io::write_sequence_dir(root, &dir).unwrap();
    root.to_path_buf()
}

pub fn write_scenario(path: &Path, toml: &str) -> PathBuf {
    std::fs::write(path, toml).unwrap();
    path.to_path_buf()
}

/// Files under `dir`, relative, sorted.
pub fn tree(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}
