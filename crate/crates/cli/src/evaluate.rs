use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use cascadetrack::io::{self, SequenceDir};
use cascadetrack::metrics::{self, DvpqConfig, DvpqReport, Sequence};
use clap::{Args, ValueEnum};
use serde_json::{json, Value};

use crate::config::{resolve_evaluate, FileConfig};
use crate::output::{manifest_path_for, OutputSet, RunManifest, Timings};
use crate::plot;
use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Dvpq,
    Stq,
    Vpq,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Dvpq => "dvpq",
            Mode::Stq => "stq",
            Mode::Vpq => "vpq",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Directory of predicted sequences.
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory of ground-truth sequences.
    #[arg(long)]
    pub truth: PathBuf,
    /// Comma separated depth thresholds; `inf` disables voiding.
    #[arg(long)]
    pub lambda_grid: Option<String>,
    /// Comma separated window sizes.
    #[arg(long)]
    pub k_grid: Option<String>,
    /// Comma separated thing class ids.
    #[arg(long)]
    pub things: Option<String>,
    /// Settings file (TOML); flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write an SVG of the per-cell scores.
    #[arg(long)]
    pub plots: bool,
    /// Results document (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct EvaluateOutcome {
    pub results: Value,
    pub outputs: Vec<PathBuf>,
}

/// Pairs prediction and truth sequences by name, checking frames and shapes.
pub fn align(pred: SequenceDir, truth: SequenceDir) -> Result<(Vec<Sequence>, Vec<Sequence>)> {
    let mut p_out = Vec::new();
    let mut t_out = Vec::new();
    let mut preds = pred.sequences.into_iter().peekable();
    for (name, t_frames, t_seq) in truth.sequences {
        let Some((p_name, p_frames, p_seq)) = preds.next() else {
            bail!("sequence {name} is missing from the prediction");
        };
        if p_name != name {
            bail!("prediction has sequence {p_name} where truth has {name}");
        }
        for (i, &f) in t_frames.iter().enumerate() {
            match p_frames.get(i) {
                Some(&g) if g == f => {}
                Some(&g) => bail!("sequence {name}: prediction has frame {g} where truth has frame {f}"),
                None => bail!("sequence {name} frame {f} is missing from the prediction"),
            }
            let (pm, tm) = (&p_seq.frames[i].panoptic, &t_seq.frames[i].panoptic);
            if (pm.width, pm.height) != (tm.width, tm.height) {
                bail!(
                    "sequence {name} frame {f}: prediction is {}x{}, truth is {}x{}",
                    pm.width,
                    pm.height,
                    tm.width,
                    tm.height
                );
            }
        }
        if let Some(&extra) = p_frames.get(t_frames.len()) {
            bail!("sequence {name} frame {extra} has no truth");
        }
        p_out.push(p_seq);
        t_out.push(t_seq);
    }
    if let Some((extra, _, _)) = preds.next() {
        bail!("prediction sequence {extra} has no truth");
    }
    Ok((p_out, t_out))
}

fn require_depth(seqs: &[Sequence], names: &[String], side: &str) -> Result<()> {
    for (s, name) in seqs.iter().zip(names) {
        if let Some(i) = s.frames.iter().position(|f| f.depth.is_none()) {
            bail!("sequence {name}: {side} frame index {i} has no depth raster");
        }
    }
    Ok(())
}

fn cells_table(report: &DvpqReport) -> String {
    let mut out = String::from("k\tlambda\twindows\tpq\tpq_thing\tpq_stuff\ttp\tfp\tfn\n");
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| x.to_string());
    for c in &report.cells {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            c.k,
            c.lambda,
            c.windows,
            c.pq,
            opt(c.pq_thing),
            opt(c.pq_stuff),
            c.tp,
            c.fp,
            c.fn_
        )
        .unwrap();
    }
    out
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<EvaluateOutcome> {
    let file_cfg = FileConfig::load(args.config.as_deref())?;
    let settings = resolve_evaluate(
        &file_cfg,
        args.lambda_grid.as_deref(),
        args.k_grid.as_deref(),
        args.things.as_deref(),
    )?;
    let mut timings = Timings::default();
    let (pred_dir, truth_dir) = timings.time("read", || -> Result<_> {
        Ok((io::read_sequence_dir(&args.pred)?, io::read_sequence_dir(&args.truth)?))
    })?;
    let names: Vec<String> = truth_dir.sequences.iter().map(|s| s.0.clone()).collect();
    let (pred, truth) = align(pred_dir, truth_dir)?;

    let mut table = None;
    let results = timings.time("evaluate", || -> Result<Value> {
        Ok(match args.mode {
            Mode::Dvpq | Mode::Vpq => {
                let lambdas = if args.mode == Mode::Vpq {
                    vec![f64::INFINITY]
                } else {
                    settings.lambda_grid.clone()
                };
                let cfg = DvpqConfig {
                    window_sizes: settings.k_grid.clone(),
                    depth_thresholds: lambdas,
                    partition: settings.partition.clone(),
                };
                cfg.validate().map_err(|e| UsageError(e.to_string()))?;
                if cfg.depth_thresholds.iter().any(|l| l.is_finite()) {
                    require_depth(&pred, &names, "prediction")?;
                    require_depth(&truth, &names, "truth")?;
                }
                let report = metrics::dvpq(&pred, &truth, &cfg)?;
                table = Some(report.clone());
                let m = args.mode.name();
                json!({
                    "mode": m,
                    m: report.dvpq,
                    format!("{m}_thing"): report.dvpq_thing,
                    format!("{m}_stuff"): report.dvpq_stuff,
                    "cells": report.cells,
                })
            }
            Mode::Stq => {
                let r = metrics::stq(&pred, &truth, &settings.partition)?;
                json!({
                    "mode": "stq",
                    "stq": r.stq,
                    "aq": r.aq,
                    "sq": r.sq,
                    "class_iou": r.class_iou,
                    "truth_tracks": r.truth_tracks,
                })
            }
        })
    })?;

    let mut set = OutputSet::new();
    set.write_str(&args.out, &io::format_json(&results)?)?;
    if let Some(report) = &table {
        let tsv = cells_table(report);
        print!("{tsv}");
        set.write_str(&sibling(&args.out, ".cells.tsv"), &tsv)?;
        if args.plots {
            let bars: Vec<(String, f64)> = report
                .cells
                .iter()
                .map(|c| (format!("k{} λ{}", c.k, c.lambda), c.pq))
                .collect();
            set.write_str(
                &sibling(&args.out, ".svg"),
                &plot::bar_chart(&format!("{} per cell", args.mode.name()), &bars),
            )?;
        }
    }
    let manifest = RunManifest::new(
        "evaluate",
        json!({
            "mode": args.mode.name(),
            "lambda_grid": settings.lambda_grid.iter().map(|l| if l.is_finite() { json!(l) } else { json!("inf") }).collect::<Vec<_>>(),
            "k_grid": settings.k_grid,
            "things": settings.partition.things,
        }),
    )
    .input(&args.pred)
    .input(&args.truth);
    let outputs = manifest.finish(set, &manifest_path_for(&args.out), timings)?;
    Ok(EvaluateOutcome { results, outputs })
}
