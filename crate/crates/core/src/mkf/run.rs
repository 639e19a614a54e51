use std::path::Path;

use crate::data_pipeline::{SensorFrame, FRAME_DT};
use crate::io::{read_table, write_table, FormatError, Table};

use super::config::{FilterMode, MkfConfig};
use super::filter::{ekf_propagate, external_update, imu_update, wheel_update, WheelObservation};
use super::{FilterState, Matrix5, MkfError, StateEstimate, Vector5};

/// Minimum standstill averaging window, s.
pub const MIN_CALIBRATION_WINDOW: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImuCalibration {
    pub accel_bias: [[f64; 2]; 2],
    pub gyro_bias: [f64; 2],
}

/// Per-channel means of both IMUs over the first `window` seconds, taken as biases.
pub fn calibrate_standstill(frames: &[SensorFrame], window: f64) -> Result<ImuCalibration, MkfError> {
    let Some(first) = frames.first() else {
        return Err(MkfError::WindowTooShort {
            available: 0.0,
            required: window.max(MIN_CALIBRATION_WINDOW),
        });
    };
    if window < MIN_CALIBRATION_WINDOW {
        return Err(MkfError::WindowTooShort {
            available: window,
            required: MIN_CALIBRATION_WINDOW,
        });
    }
    let end = first.t + window - 1e-9;
    let used: Vec<&SensorFrame> = frames.iter().take_while(|f| f.t < end).collect();
    let covered = used.last().map_or(0.0, |f| f.t - first.t + FRAME_DT);
    if covered < window - 1e-6 {
        return Err(MkfError::WindowTooShort {
            available: covered,
            required: window,
        });
    }
    let n = used.len() as f64;
    let mut sums = [0.0; 6];
    for f in &used {
        for k in 0..3 {
            sums[k] += f.imu1[k];
            sums[3 + k] += f.imu2[k];
        }
    }
    let m = sums.map(|s| s / n);
    Ok(ImuCalibration {
        accel_bias: [[m[0], m[1]], [m[3], m[4]]],
        gyro_bias: [m[2], m[5]],
    })
}

/// Tracks repeats and gate rejections for one measurement channel.
#[derive(Debug, Default)]
struct ChannelMonitor {
    last: Vec<f64>,
    changed_at: f64,
    rejected_since: Option<f64>,
}

impl ChannelMonitor {
    fn is_stale(&mut self, values: &[f64], t: f64, stale_after: f64) -> bool {
        if self.last != values {
            self.last = values.to_vec();
            self.changed_at = t;
        }
        t - self.changed_at > stale_after + 1e-9
    }

    fn gated(&self, t: f64, reset_after: f64) -> bool {
        self.rejected_since.is_none_or(|s| t - s < reset_after)
    }

    fn apply(
        &mut self,
        fs: FilterState,
        t: f64,
        result: Result<FilterState, MkfError>,
    ) -> Result<FilterState, MkfError> {
        match result {
            Ok(next) => {
                self.rejected_since = None;
                Ok(next)
            }
            Err(MkfError::GateRejected { .. }) => {
                self.rejected_since.get_or_insert(t);
                Ok(fs)
            }
            Err(e) => Err(e),
        }
    }
}

/// Runs the filter over a synchronized stream, returning one state per frame.
pub fn run_filter(frames: &[SensorFrame], config: &MkfConfig) -> Result<Vec<FilterState>, MkfError> {
    config.validate()?;
    let first = frames.first().ok_or(MkfError::EmptyStream)?;
    let cal = if config.calibration_window > 0.0 {
        calibrate_standstill(frames, config.calibration_window)?
    } else {
        ImuCalibration::default()
    };
    let noise = &config.noise;
    let mut fs = FilterState::new(
        StateEstimate::default(),
        Matrix5::from_diagonal(&Vector5::from(config.initial_variance)),
    )
    .with_calibration(&cal);
    fs.time = first.t;

    let mut monitors: [ChannelMonitor; 4] = Default::default();
    let mut out = Vec::with_capacity(frames.len());
    for (k, f) in frames.iter().enumerate() {
        if k > 0 {
            fs = ekf_propagate(&fs, f.t - fs.time, noise)?;
            fs.time = f.t;
        }
        for (imu, values) in [(0, &f.imu1), (1, &f.imu2)] {
            let m = &mut monitors[imu];
            if m.is_stale(values, f.t, config.stale_after) {
                continue;
            }
            let gated = m.gated(f.t, config.gate_reset_after);
            let r = imu_update(&fs, imu, [values[0], values[1]], values[2], noise, gated);
            fs = m.apply(fs, f.t, r)?;
        }
        let m = &mut monitors[2];
        if !m.is_stale(&f.wheel_omega, f.t, config.stale_after) {
            let obs = WheelObservation {
                omega: f.wheel_omega,
                torque: f.per_wheel_torques(),
                steering: f.steering,
                geometry: config.geometry,
            };
            let r = wheel_update(&fs, &obs, noise, m.gated(f.t, config.gate_reset_after));
            fs = m.apply(fs, f.t, r)?;
        }
        if config.mode == FilterMode::Reference {
            if let Some(v) = f.ext_velocity {
                let m = &mut monitors[3];
                if !m.is_stale(&v, f.t, config.stale_after) {
                    let gated = m.gated(f.t, config.gate_reset_after);
                    let r = external_update(&fs, v, config.ext_sensor_offset, noise, gated);
                    fs = m.apply(fs, f.t, r)?;
                }
            }
        }
        out.push(fs.clone());
    }
    Ok(out)
}

pub const ESTIMATE_HEADER: [&str; 6] = ["t", "vx", "vy", "yawrate", "ax", "ay"];

fn covariance_columns() -> Vec<String> {
    (0..5)
        .flat_map(|i| (0..5).map(move |j| format!("p{i}{j}")))
        .collect()
}

/// `t,vx,vy,yawrate,ax,ay,p00..p44` with the covariance row-major.
pub fn estimates_to_table(states: &[FilterState]) -> Table {
    let cols = covariance_columns();
    let mut header: Vec<&str> = ESTIMATE_HEADER.to_vec();
    header.extend(cols.iter().map(String::as_str));
    let mut t = Table::new(&header);
    for s in states {
        let mut row = vec![s.time];
        row.extend(s.mean.to_array());
        row.extend(s.covariance.transpose().iter());
        t.rows.push(row);
    }
    t
}

/// Reads estimates with or without covariance columns (absent covariance reads as zero).
pub fn estimates_from_table(table: &Table) -> Result<Vec<FilterState>, FormatError> {
    table.expect_prefix(&ESTIMATE_HEADER)?;
    let with_cov = table.header.len() > ESTIMATE_HEADER.len();
    if with_cov {
        let cols = covariance_columns();
        let mut expected: Vec<&str> = ESTIMATE_HEADER.to_vec();
        expected.extend(cols.iter().map(String::as_str));
        table.expect_exact(&expected)?;
    }
    Ok(table
        .rows
        .iter()
        .map(|r| {
            let mean = StateEstimate::new(r[1], r[2], r[3], r[4], r[5]);
            let covariance = if with_cov {
                Matrix5::from_row_slice(&r[6..31])
            } else {
                Matrix5::zeros()
            };
            let mut s = FilterState::new(mean, covariance);
            s.time = r[0];
            s
        })
        .collect())
}

pub fn write_estimates(path: &Path, states: &[FilterState]) -> Result<(), FormatError> {
    let f = std::fs::File::create(path)?;
    write_table(std::io::BufWriter::new(f), &estimates_to_table(states))
}

pub fn read_estimates(path: &Path) -> Result<Vec<FilterState>, FormatError> {
    let f = std::fs::File::open(path)?;
    estimates_from_table(&read_table(std::io::BufReader::new(f))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::data_pipeline::sync_200hz;
    use crate::vehicle_sim::{synthesize_sensors, ImuBias, NoiseSigmas, ScenarioConfig, ScenarioKind, SensorFaultPlan};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn standstill_frames(n: usize, imu1: [f64; 3]) -> Vec<SensorFrame> {
        (0..n)
            .map(|k| SensorFrame {
                t: k as f64 * FRAME_DT,
                imu1,
                imu2: imu1,
                ..SensorFrame::default()
            })
            .collect()
    }

    #[test]
    fn constant_readings_give_exact_biases() {
        let frames = standstill_frames(300, [0.2, -0.1, 0.01]);
        let cal = calibrate_standstill(&frames, 1.0).unwrap();
        assert_relative_eq!(cal.accel_bias[0][0], 0.2, epsilon = 1e-12);
        assert_relative_eq!(cal.accel_bias[1][1], -0.1, epsilon = 1e-12);
        assert_relative_eq!(cal.gyro_bias[1], 0.01, epsilon = 1e-12);
    }

    #[test]
    fn noisy_bias_within_standard_error_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(0.0, 0.05).unwrap();
        let mut frames = standstill_frames(400, [0.0; 3]);
        for f in &mut frames {
            f.imu1[0] = 0.3 + normal.sample(&mut rng);
        }
        let cal = calibrate_standstill(&frames, 2.0).unwrap();
        assert!((cal.accel_bias[0][0] - 0.3).abs() < 3.0 * 0.05 / 20.0);
    }

    #[test]
    fn short_windows_are_rejected() {
        assert!(matches!(
            calibrate_standstill(&[], 1.0),
            Err(MkfError::WindowTooShort { .. })
        ));
        let frames = standstill_frames(100, [0.0; 3]);
        assert!(matches!(
            calibrate_standstill(&frames, 1.0),
            Err(MkfError::WindowTooShort { .. })
        ));
        assert!(matches!(
            calibrate_standstill(&standstill_frames(400, [0.0; 3]), 0.5),
            Err(MkfError::WindowTooShort { .. })
        ));
    }

    #[test]
    fn standstill_noiseless_stays_at_zero() {
        let frames = standstill_frames(2000, [0.0; 3]);
        let states = run_filter(&frames, &MkfConfig::default()).unwrap();
        assert_eq!(states.len(), frames.len());
        assert!(states.iter().all(|s| s.mean.vx.abs() < 1e-6 && s.mean.vy.abs() < 1e-6));
    }

    #[test]
    fn known_bias_standstill_drift_is_small() {
        let out = crate::vehicle_sim::simulate(&ScenarioConfig::new(ScenarioKind::Standstill, 12.0, 1)).unwrap();
        let plan = SensorFaultPlan {
            imu_bias: [
                ImuBias { ax: 0.2, ay: -0.15, gz: 0.008 },
                ImuBias { ax: -0.1, ay: 0.25, gz: -0.005 },
            ],
            noise: NoiseSigmas::default(),
            ..SensorFaultPlan::default()
        };
        let raw = synthesize_sensors(&out.trajectory, &plan, 9);
        let frames = sync_200hz(&raw).unwrap();
        let states = run_filter(&frames, &MkfConfig::default()).unwrap();
        // Drift is the low-frequency velocity error: the mean over the final second,
        // 10 s after calibration ends.
        let tail: Vec<_> = states.iter().filter(|s| s.time >= 11.0).collect();
        let n = tail.len() as f64;
        let vx = tail.iter().map(|s| s.mean.vx).sum::<f64>() / n;
        let vy = tail.iter().map(|s| s.mean.vy).sum::<f64>() / n;
        assert!(vx.hypot(vy) < 0.01, "drift ({vx}, {vy})");
        let worst = states.iter().map(|s| s.mean.vx.hypot(s.mean.vy)).fold(0.0, f64::max);
        assert!(worst < 0.05, "excursion {worst}");
    }

    #[test]
    fn estimate_table_round_trip() {
        let mut s = FilterState::new(
            StateEstimate::new(1.0, 2.0, 0.1, 0.2, 0.3),
            Matrix5::from_fn(|i, j| (i * 5 + j) as f64),
        );
        s.time = 0.005;
        let t = estimates_to_table(std::slice::from_ref(&s));
        assert_eq!(t.header.len(), 31);
        assert_eq!(t.header[7], "p01");
        assert_eq!(t.rows[0][7], 1.0);
        assert_eq!(estimates_from_table(&t).unwrap(), vec![s]);
    }
}
