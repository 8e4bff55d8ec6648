//! Optional TOML config file, merged as flags > file > defaults.

use std::path::Path;

use anyhow::{Context, Result};
use cascadetrack::metrics::ClassPartition;
use cascadetrack::tracker::{parse_stages, KernelUpdate};
use cascadetrack::{Stage, TrackerConfig};
use clap::Args;
use serde::Deserialize;

use crate::UsageError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub tracker: TrackerSection,
    #[serde(default)]
    pub evaluate: EvaluateSection,
    #[serde(default)]
    pub profile: ProfileSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerSection {
    pub stages: Option<Vec<Stage>>,
    pub am_gate: Option<f64>,
    pub sm_gate: Option<f64>,
    pub max_age: Option<u32>,
    /// `replace` or `ema:<alpha>`.
    pub kernel_update: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    pub lambda_grid: Option<Vec<f64>>,
    pub k_grid: Option<Vec<usize>>,
    pub things: Option<Vec<u16>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSection {
    pub reps: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
    }
}

/// Tracker flags shared by `track` and `profile`.
#[derive(Debug, Clone, Default, Args)]
pub struct TrackerFlags {
    /// Comma separated association stages, e.g. `am,sm`.
    #[arg(long)]
    pub stages: Option<String>,
    /// Largest cosine distance accepted by the appearance stage.
    #[arg(long)]
    pub am_gate: Option<f64>,
    /// Largest bird's-eye-view distance, in meters, accepted by the spatial stage.
    #[arg(long)]
    pub sm_gate: Option<f64>,
    /// Frames an unmatched tracklet stays matchable.
    #[arg(long)]
    pub max_age: Option<u32>,
    /// `replace` or `ema:<alpha>`.
    #[arg(long)]
    pub kernel_update: Option<String>,
}

fn usage<E: std::fmt::Display>(e: E) -> anyhow::Error {
    UsageError(e.to_string()).into()
}

pub fn resolve_tracker(file: &FileConfig, flags: &TrackerFlags) -> Result<TrackerConfig> {
    let mut cfg = TrackerConfig::default();
    let sec = &file.tracker;
    if let Some(s) = &sec.stages {
        cfg.stages = s.clone();
    }
    cfg.am_gate = sec.am_gate.unwrap_or(cfg.am_gate);
    cfg.sm_gate = sec.sm_gate.unwrap_or(cfg.sm_gate);
    cfg.max_age = sec.max_age.unwrap_or(cfg.max_age);
    if let Some(k) = &sec.kernel_update {
        cfg.kernel_update = k.parse::<KernelUpdate>().map_err(usage)?;
    }

    if let Some(s) = &flags.stages {
        cfg.stages = parse_stages(s).map_err(usage)?;
    }
    cfg.am_gate = flags.am_gate.unwrap_or(cfg.am_gate);
    cfg.sm_gate = flags.sm_gate.unwrap_or(cfg.sm_gate);
    cfg.max_age = flags.max_age.unwrap_or(cfg.max_age);
    if let Some(k) = &flags.kernel_update {
        cfg.kernel_update = k.parse::<KernelUpdate>().map_err(usage)?;
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

/// Comma separated reals; `inf` is accepted.
pub fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| usage(format!("cannot parse {t:?} as a number")))
        })
        .collect()
}

pub fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| usage(format!("cannot parse {t:?} as a count")))
        })
        .collect()
}

pub struct EvaluateSettings {
    pub lambda_grid: Vec<f64>,
    pub k_grid: Vec<usize>,
    pub partition: ClassPartition,
}

pub fn resolve_evaluate(
    file: &FileConfig,
    lambda_grid: Option<&str>,
    k_grid: Option<&str>,
    things: Option<&str>,
) -> Result<EvaluateSettings> {
    let defaults = cascadetrack::metrics::DvpqConfig::default();
    let sec = &file.evaluate;
    let lambda_grid = match lambda_grid {
        Some(s) => parse_f64_list(s)?,
        None => sec.lambda_grid.clone().unwrap_or(defaults.depth_thresholds),
    };
    let k_grid = match k_grid {
        Some(s) => parse_usize_list(s)?,
        None => sec.k_grid.clone().unwrap_or(defaults.window_sizes),
    };
    let partition = match things {
        Some(s) => ClassPartition::new(
            parse_usize_list(s)?
                .into_iter()
                .map(|c| u16::try_from(c).map_err(|_| usage(format!("class id {c} out of range"))))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => sec
            .things
            .clone()
            .map(ClassPartition::new)
            .unwrap_or(defaults.partition),
    };
    Ok(EvaluateSettings {
        lambda_grid,
        k_grid,
        partition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_override_defaults() {
        let file: FileConfig = toml::from_str(
            "[tracker]\nstages = [\"sm\"]\nam_gate = 0.3\nsm_gate = 4.0\nkernel_update = \"ema:0.5\"\n",
        )
        .unwrap();
        let flags = TrackerFlags {
            sm_gate: Some(1.0),
            ..TrackerFlags::default()
        };
        let cfg = resolve_tracker(&file, &flags).unwrap();
        assert_eq!(cfg.stages, vec![Stage::Spatial]);
        assert_eq!(cfg.am_gate, 0.3);
        assert_eq!(cfg.sm_gate, 1.0);
        assert_eq!(cfg.max_age, 1);
        assert_eq!(cfg.kernel_update, KernelUpdate::Ema { alpha: 0.5 });
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("[tracker]\ngate = 1.0\n").is_err());
    }

    #[test]
    fn grids_accept_infinity() {
        let s = resolve_evaluate(&FileConfig::default(), Some("0.1, inf"), Some("1,2"), None).unwrap();
        assert_eq!(s.lambda_grid, vec![0.1, f64::INFINITY]);
        assert_eq!(s.k_grid, vec![1, 2]);
        let file: FileConfig = toml::from_str("[evaluate]\nlambda_grid = [0.5, inf]\n").unwrap();
        let s = resolve_evaluate(&file, None, None, None).unwrap();
        assert_eq!(s.lambda_grid, vec![0.5, f64::INFINITY]);
        assert_eq!(s.k_grid, vec![1, 2, 3, 4]);
    }
}
