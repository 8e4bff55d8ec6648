use std::process::ExitCode;

use cascadetrack_cli::{
    cmd_evaluate, cmd_profile, cmd_simulate, cmd_track, exit_code, EvaluateArgs, ProfileArgs,
    SimulateArgs, TrackArgs,
};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cascadetrack", version, about = "Cascaded appearance/spatial tracking and video panoptic evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Associate detections into tracks.
    Track(TrackArgs),
    /// Score predictions with DVPQ, VPQ or STQ.
    Evaluate(EvaluateArgs),
    /// Generate synthetic scenarios with ground truth.
    Simulate(SimulateArgs),
    /// Measure per-frame tracker latency per stage set.
    Profile(ProfileArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Track(a) => cmd_track(a).map(|o| {
            if let Some(scores) = &o.scores {
                for (name, s) in scores {
                    println!("{name}\taq={}\tid_switches={}", s.aq, s.id_switches);
                }
            }
        }),
        Command::Evaluate(a) => cmd_evaluate(a).map(|o| println!("{}", o.results)),
        Command::Simulate(a) => cmd_simulate(a).map(|o| {
            for r in o.ablation.iter().flatten() {
                println!("{}\t{}\tmean_aq={:.4}", r.family.name(), r.stages, r.mean_aq);
            }
        }),
        Command::Profile(a) => cmd_profile(a).map(|r| {
            for s in &r.results {
                println!(
                    "{}\tmean={:.4}ms\tp50={:.4}ms\tp99={:.4}ms\tdelta={:.4}ms",
                    s.stages, s.mean_ms, s.p50_ms, s.p99_ms, s.delta_ms
                );
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
