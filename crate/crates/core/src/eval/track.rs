use std::path::Path;

use super::EvalError;
use crate::data_pipeline::{SensorFrame, FRAME_DT};
use crate::io::{write_table, FormatError, Table};
use crate::mkf::StateEstimate;
use crate::vehicle_sim::{GroundTruthState, Trajectory};

pub const TRACK_ERROR_HEADER: [&str; 3] = ["x", "y", "vy_abs_error"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackErrorRecord {
    pub x: f64,
    pub y: f64,
    pub vy_abs_error: f64,
}

/// Full simulator states at each frame's timestamp.
pub fn truth_states_at(frames: &[SensorFrame], traj: &Trajectory) -> Result<Vec<GroundTruthState>, EvalError> {
    let t0 = traj.states.first().map_or(0.0, |s| s.time);
    frames
        .iter()
        .map(|f| {
            let k = ((f.t - t0) / FRAME_DT).round();
            traj.states
                .get(k as usize)
                .filter(|s| k >= 0.0 && (s.time - f.t).abs() < 1e-6)
                .copied()
                .ok_or(EvalError::Misaligned(f.t))
        })
        .collect()
}

/// Lateral-velocity error at each position, frames after `warmup` only.
pub fn error_along_track(
    estimates: &[StateEstimate],
    truth: &[GroundTruthState],
    warmup: usize,
) -> Result<Vec<TrackErrorRecord>, EvalError> {
    if estimates.len() != truth.len() {
        return Err(EvalError::LengthMismatch(estimates.len(), truth.len()));
    }
    Ok(estimates
        .iter()
        .zip(truth)
        .skip(warmup)
        .map(|(e, s)| TrackErrorRecord {
            x: s.x,
            y: s.y,
            vy_abs_error: (e.vy - s.vy).abs(),
        })
        .collect())
}

pub fn track_errors_to_table(records: &[TrackErrorRecord]) -> Table {
    let mut t = Table::new(&TRACK_ERROR_HEADER);
    t.rows = records.iter().map(|r| vec![r.x, r.y, r.vy_abs_error]).collect();
    t
}

pub fn write_track_errors(path: &Path, records: &[TrackErrorRecord]) -> Result<(), FormatError> {
    let f = std::fs::File::create(path)?;
    write_table(std::io::BufWriter::new(f), &track_errors_to_table(records))
}
