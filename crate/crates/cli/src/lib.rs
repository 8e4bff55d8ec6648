//! Command implementations behind the `cascadetrack` binary.

pub mod config;
pub mod evaluate;
pub mod output;
pub mod plot;
pub mod profile;
pub mod simulate;
pub mod track;

pub use evaluate::{cmd_evaluate, EvaluateArgs, Mode};
pub use profile::{cmd_profile, ProfileArgs};
pub use simulate::{cmd_simulate, SimulateArgs, Suite};
pub use track::{cmd_track, TrackArgs};

/// Bad invocation; the binary exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// Process exit status for an error returned by a command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        2
    } else {
        1
    }
}
