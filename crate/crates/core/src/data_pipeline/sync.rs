//! Zero-order-hold resampling of multi-rate channels onto the 200 Hz grid.

use crate::vehicle_sim::{ChannelGroup, RawSensorStream};

use super::frame::{SensorFrame, FRAME_DT};
use super::PipelineError;

fn nanos(t: f64) -> i64 {
    (t * 1e9).round() as i64
}

/// For each tick, the index of the latest sample at or before it. Times are compared in
/// integer nanoseconds so grid coincidences (e.g. 40 ms on both the 5 ms and 8 ms grids)
/// are exact.
pub fn hold_indices(sample_times: &[f64], ticks: &[f64]) -> Result<Vec<usize>, PipelineError> {
    let mut out = Vec::with_capacity(ticks.len());
    let mut k = 0usize;
    for &tick in ticks {
        let tn = nanos(tick);
        if sample_times.is_empty() || nanos(sample_times[0]) > tn {
            return Err(PipelineError::LeadingGap {
                channel: String::new(),
                first_sample: sample_times.first().copied().unwrap_or(f64::NAN),
                first_tick: tick,
            });
        }
        while k + 1 < sample_times.len() && nanos(sample_times[k + 1]) <= tn {
            k += 1;
        }
        out.push(k);
    }
    Ok(out)
}

fn held(group: &ChannelGroup, ticks: &[f64]) -> Result<Vec<Vec<f64>>, PipelineError> {
    let idx = hold_indices(&group.times, ticks).map_err(|e| match e {
        PipelineError::LeadingGap {
            first_sample,
            first_tick,
            ..
        } => PipelineError::LeadingGap {
            channel: group.sensor.name().to_string(),
            first_sample,
            first_tick,
        },
        other => other,
    })?;
    Ok(idx.into_iter().map(|k| group.values[k].clone()).collect())
}

/// Output ticks run from the first grid point at or after the earliest sample to the
/// last grid point every channel still covers.
pub fn zero_order_hold_sync(raw: &RawSensorStream, rate_hz: f64) -> Result<Vec<SensorFrame>, PipelineError> {
    if !(rate_hz > 0.0) {
        return Err(PipelineError::InvalidRate(rate_hz));
    }
    let groups: Vec<&ChannelGroup> = raw.groups().collect();
    if groups.iter().any(|g| g.is_empty()) {
        return Err(PipelineError::EmptyChannel);
    }
    let period = 1.0 / rate_hz;
    let earliest = groups.iter().map(|g| g.times[0]).fold(f64::INFINITY, f64::min);
    let latest = groups
        .iter()
        .map(|g| *g.times.last().unwrap())
        .fold(f64::INFINITY, f64::min);
    let first = (earliest * rate_hz - 1e-6).ceil() as i64;
    let last = (latest * rate_hz + 1e-6).floor() as i64;
    let ticks: Vec<f64> = (first..=last).map(|k| k as f64 / rate_hz).collect();
    debug_assert!(ticks.windows(2).all(|w| (w[1] - w[0] - period).abs() < 1e-9));

    let imu1 = held(&raw.imu1, &ticks)?;
    let imu2 = held(&raw.imu2, &ticks)?;
    let steer = held(&raw.steering, &ticks)?;
    let wheels = held(&raw.wheels, &ticks)?;
    let ext = raw.velocity.as_ref().map(|g| held(g, &ticks)).transpose()?;

    Ok(ticks
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let w = &wheels[k];
            let tq = [w[4], w[5], w[6], w[7]];
            SensorFrame {
                t,
                imu1: [imu1[k][0], imu1[k][1], imu1[k][2]],
                imu2: [imu2[k][0], imu2[k][1], imu2[k][2]],
                wheel_omega: [w[0], w[1], w[2], w[3]],
                torque_front: tq[0] + tq[1],
                torque_rear: tq[2] + tq[3],
                steering: steer[k][0],
                ext_velocity: ext.as_ref().map(|e| [e[k][0], e[k][1]]),
                wheel_torques: Some(tq),
            }
        })
        .collect())
}

/// Convenience for the default grid.
pub fn sync_200hz(raw: &RawSensorStream) -> Result<Vec<SensorFrame>, PipelineError> {
    zero_order_hold_sync(raw, 1.0 / FRAME_DT)
}
