//! Post-network perception pipeline: cascaded appearance/spatial tracking by
//! association, an exact linear assignment core, instance depth operations,
//! video panoptic metrics and a deterministic scene simulator.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod depthops;
pub mod geometry;
pub mod io;
pub mod lapsolver;
pub mod metrics;
pub mod simulator;
pub mod tracker;

pub use geometry::{BevPoint, CameraIntrinsics};
pub use lapsolver::{solve, CostMatrix, Matching, FORBIDDEN};
pub use tracker::{Detection, Stage, TrackId, Tracker, TrackerConfig};
