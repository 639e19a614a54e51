//! Synchronization, reference-target generation, normalization statistics and splits.

mod dataset;
mod frame;
mod norm;
mod smoother;
mod splits;
mod sync;

pub use dataset::{
    align_truth, mkf_config_for_manifest, read_collection, read_manifest, states_from_table,
    states_to_table, truth_estimate, write_state_file, Dataset, Provenance, SplitTag,
};
pub use norm::{compute_norm_stats, NormStats, OUTPUT_DIM, OUTPUT_NAMES};
pub use smoother::{
    gaussian_half_kernel, gaussian_smooth, generate_target, smooth_estimates,
    TARGET_SMOOTHER_SIGMA,
};
pub use splits::{build_splits, ScenarioEntry, Splits, DEFAULT_SPLIT_WEIGHTS};

pub use frame::{
    check_grid, frames_from_table, frames_to_table, read_frames, write_frames, SensorFrame,
    EXT_COLUMNS, FRAME_DT, FRAME_HEADER, FRAME_RATE_HZ, INPUT_DIM, WHEEL_TORQUE_COLUMNS,
};
pub use sync::{hold_indices, sync_200hz, zero_order_hold_sync};

use thiserror::Error;

use crate::io::FormatError;
use crate::mkf::MkfError;
use crate::vehicle_sim::SimError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("channel `{channel}` starts at {first_sample} s, after the first output tick {first_tick} s")]
    LeadingGap {
        channel: String,
        first_sample: f64,
        first_tick: f64,
    },
    #[error("a channel has no samples")]
    EmptyChannel,
    #[error("invalid output rate {0} Hz")]
    InvalidRate(f64),
    #[error("frames lack the external velocity channel needed for reference targets")]
    MissingExternalVelocity,
    #[error("dataset has no targets")]
    MissingTargets,
    #[error("no training frames")]
    EmptySplit,
    #[error("channel `{0}` has zero variance")]
    DegenerateChannel(String),
    #[error("insufficient scenarios: {0}")]
    InsufficientScenarios(String),
    #[error("no ground-truth sample at t = {0} s")]
    Misaligned(f64),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Filter(#[from] MkfError),
    #[error(transparent)]
    Sim(#[from] SimError),
}
