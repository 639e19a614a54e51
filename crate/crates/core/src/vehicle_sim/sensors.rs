//! Sensor synthesis at native rates: two IMUs, steering, wheel encoders with motor
//! torques, and the external velocity sensor used only for reference generation.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::io::{read_table, write_table, FormatError, Table};

use super::dynamics::{Controls, GroundTruthState};
use super::params::VehicleParams;

pub const IMU1_RATE_HZ: f64 = 200.0;
pub const IMU2_RATE_HZ: f64 = 125.0;
pub const STEERING_RATE_HZ: f64 = 200.0;
pub const WHEELS_RATE_HZ: f64 = 100.0;
pub const VELOCITY_RATE_HZ: f64 = 200.0;
/// Rate at which ground truth is recorded.
pub const TRUTH_RATE_HZ: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SensorId {
    Imu1,
    Imu2,
    Steering,
    Wheels,
    Velocity,
}

impl SensorId {
    pub const ALL: [SensorId; 5] = [
        SensorId::Imu1,
        SensorId::Imu2,
        SensorId::Steering,
        SensorId::Wheels,
        SensorId::Velocity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SensorId::Imu1 => "imu1",
            SensorId::Imu2 => "imu2",
            SensorId::Steering => "steering",
            SensorId::Wheels => "wheels",
            SensorId::Velocity => "velocity",
        }
    }

    pub fn rate_hz(self) -> f64 {
        match self {
            SensorId::Imu1 => IMU1_RATE_HZ,
            SensorId::Imu2 => IMU2_RATE_HZ,
            SensorId::Steering => STEERING_RATE_HZ,
            SensorId::Wheels => WHEELS_RATE_HZ,
            SensorId::Velocity => VELOCITY_RATE_HZ,
        }
    }

    pub fn columns(self) -> &'static [&'static str] {
        match self {
            SensorId::Imu1 | SensorId::Imu2 => &["ax", "ay", "gz"],
            SensorId::Steering => &["steer"],
            SensorId::Wheels => &[
                "w_fl", "w_fr", "w_rl", "w_rr", "tq_fl", "tq_fr", "tq_rl", "tq_rr",
            ],
            SensorId::Velocity => &["vx", "vy"],
        }
    }

    fn stream_index(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for SensorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SensorId {
    type Err = FormatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SensorId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| FormatError::Invalid(format!("unknown sensor `{s}`")))
    }
}

/// Constant additive IMU bias: accelerometer x/y in m/s², gyro z in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImuBias {
    pub ax: f64,
    pub ay: f64,
    pub gz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSigmas {
    pub accel: f64,
    pub gyro: f64,
    pub wheel_speed: f64,
    pub torque: f64,
    pub steering: f64,
    pub velocity: f64,
}

impl Default for NoiseSigmas {
    fn default() -> Self {
        Self {
            accel: 0.05,
            gyro: 0.002,
            wheel_speed: 0.1,
            torque: 1.0,
            steering: 0.001,
            velocity: 0.05,
        }
    }
}

impl NoiseSigmas {
    pub fn zero() -> Self {
        Self {
            accel: 0.0,
            gyro: 0.0,
            wheel_speed: 0.0,
            torque: 0.0,
            steering: 0.0,
            velocity: 0.0,
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            accel: self.accel * k,
            gyro: self.gyro * k,
            wheel_speed: self.wheel_speed * k,
            torque: self.torque * k,
            steering: self.steering * k,
            velocity: self.velocity * k,
        }
    }

    fn all(&self) -> [f64; 6] {
        [
            self.accel,
            self.gyro,
            self.wheel_speed,
            self.torque,
            self.steering,
            self.velocity,
        ]
    }
}

/// From `t_start` on, the sensor keeps reporting its last sample taken at or before `t_start`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreezeEvent {
    pub sensor: SensorId,
    pub t_start: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorFaultPlan {
    pub imu_bias: [ImuBias; 2],
    pub noise: NoiseSigmas,
    pub freeze_events: Vec<FreezeEvent>,
    /// Traction-control slip target used by launch manoeuvres.
    pub launch_slip_ratio: f64,
    /// Mounting point of the external velocity sensor in the car frame, m.
    pub velocity_sensor_offset: [f64; 2],
}

impl Default for SensorFaultPlan {
    fn default() -> Self {
        Self {
            imu_bias: [ImuBias::default(); 2],
            noise: NoiseSigmas::default(),
            freeze_events: Vec::new(),
            launch_slip_ratio: 0.20,
            velocity_sensor_offset: [0.5, 0.0],
        }
    }
}

impl SensorFaultPlan {
    pub fn noiseless() -> Self {
        Self {
            noise: NoiseSigmas::zero(),
            ..Self::default()
        }
    }

    pub fn validate(&self, duration: f64) -> Result<(), FormatError> {
        if self.noise.all().iter().any(|s| !(*s >= 0.0)) {
            return Err(FormatError::Invalid("noise sigmas must be >= 0".into()));
        }
        for ev in &self.freeze_events {
            if !(ev.t_start >= 0.0 && ev.t_start <= duration) {
                return Err(FormatError::Invalid(format!(
                    "freeze of {} at {} s lies outside [0, {duration}]",
                    ev.sensor, ev.t_start
                )));
            }
        }
        Ok(())
    }

    fn freeze_start(&self, sensor: SensorId) -> Option<f64> {
        self.freeze_events
            .iter()
            .filter(|e| e.sensor == sensor)
            .map(|e| e.t_start)
            .reduce(f64::min)
    }
}

/// Ground truth recorded at [`TRUTH_RATE_HZ`] together with the controls applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub params: VehicleParams,
    pub states: Vec<GroundTruthState>,
    pub controls: Vec<Controls>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.states.last().map_or(0.0, |s| s.time)
    }

    pub const CSV_HEADER: [&'static str; 18] = [
        "t", "vx", "vy", "yawrate", "ax", "ay", "w_fl", "w_fr", "w_rl", "w_rr", "x", "y",
        "heading", "steer", "tq_fl", "tq_fr", "tq_rl", "tq_rr",
    ];

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&Self::CSV_HEADER);
        for (s, c) in self.states.iter().zip(&self.controls) {
            let mut row = vec![s.time, s.vx, s.vy, s.yaw_rate, s.ax, s.ay];
            row.extend_from_slice(&s.wheel_omega);
            row.extend_from_slice(&[s.x, s.y, s.heading, c.steering]);
            row.extend_from_slice(&c.wheel_torques);
            t.rows.push(row);
        }
        t
    }

    pub fn from_table(table: &Table, params: VehicleParams) -> Result<Self, FormatError> {
        table.expect_exact(&Self::CSV_HEADER)?;
        let mut states = Vec::with_capacity(table.rows.len());
        let mut controls = Vec::with_capacity(table.rows.len());
        for r in &table.rows {
            states.push(GroundTruthState {
                time: r[0],
                vx: r[1],
                vy: r[2],
                yaw_rate: r[3],
                ax: r[4],
                ay: r[5],
                wheel_omega: [r[6], r[7], r[8], r[9]],
                x: r[10],
                y: r[11],
                heading: r[12],
            });
            controls.push(Controls {
                steering: r[13],
                wheel_torques: [r[14], r[15], r[16], r[17]],
            });
        }
        Ok(Self {
            params,
            states,
            controls,
        })
    }

    /// Linear interpolation of the truth at time `t` (clamped to the recorded span).
    fn sample_at(&self, t: f64) -> (GroundTruthState, Controls) {
        let pos = (t * TRUTH_RATE_HZ).max(0.0);
        let last = self.states.len() - 1;
        let j0 = (pos + 1e-9).floor() as usize;
        if j0 >= last {
            return (self.states[last], self.controls[last]);
        }
        let frac = pos - j0 as f64;
        if frac.abs() < 1e-9 {
            return (self.states[j0], self.controls[j0]);
        }
        let (a, b) = (&self.states[j0], &self.states[j0 + 1]);
        let lerp = |x: f64, y: f64| x + frac * (y - x);
        let mut s = *a;
        s.vx = lerp(a.vx, b.vx);
        s.vy = lerp(a.vy, b.vy);
        s.yaw_rate = lerp(a.yaw_rate, b.yaw_rate);
        s.ax = lerp(a.ax, b.ax);
        s.ay = lerp(a.ay, b.ay);
        for i in 0..4 {
            s.wheel_omega[i] = lerp(a.wheel_omega[i], b.wheel_omega[i]);
        }
        s.time = t;
        // Controls are zero-order held by the actuators.
        (s, self.controls[j0])
    }
}

/// One channel group sampled at its native rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelGroup {
    pub sensor: SensorId,
    pub rate_hz: f64,
    pub times: Vec<f64>,
    /// One row per sample, ordered as [`SensorId::columns`].
    pub values: Vec<Vec<f64>>,
}

impl ChannelGroup {
    pub fn new(sensor: SensorId) -> Self {
        Self {
            sensor,
            rate_hz: sensor.rate_hz(),
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn to_table(&self) -> Table {
        let mut header = vec!["t"];
        header.extend_from_slice(self.sensor.columns());
        let mut t = Table::new(&header);
        for (time, v) in self.times.iter().zip(&self.values) {
            let mut row = Vec::with_capacity(v.len() + 1);
            row.push(*time);
            row.extend_from_slice(v);
            t.rows.push(row);
        }
        t
    }

    pub fn from_table(sensor: SensorId, table: &Table) -> Result<Self, FormatError> {
        let mut header = vec!["t"];
        header.extend_from_slice(sensor.columns());
        table.expect_exact(&header)?;
        let mut g = Self::new(sensor);
        for (i, row) in table.rows.iter().enumerate() {
            if let Some(prev) = g.times.last() {
                if !(row[0] > *prev) {
                    return Err(FormatError::BadField {
                        row: i + 1,
                        column: "t".into(),
                        reason: "timestamps must be strictly increasing".into(),
                    });
                }
            }
            g.times.push(row[0]);
            g.values.push(row[1..].to_vec());
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawSensorStream {
    pub imu1: ChannelGroup,
    pub imu2: ChannelGroup,
    pub steering: ChannelGroup,
    pub wheels: ChannelGroup,
    /// Present only when the external velocity sensor was simulated.
    pub velocity: Option<ChannelGroup>,
}

impl RawSensorStream {
    pub fn groups(&self) -> impl Iterator<Item = &ChannelGroup> {
        [&self.imu1, &self.imu2, &self.steering, &self.wheels]
            .into_iter()
            .chain(self.velocity.as_ref())
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), FormatError> {
        std::fs::create_dir_all(dir)?;
        for g in self.groups() {
            let f = std::fs::File::create(dir.join(format!("{}.csv", g.sensor.name())))?;
            write_table(std::io::BufWriter::new(f), &g.to_table())?;
        }
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self, FormatError> {
        let load = |id: SensorId| -> Result<ChannelGroup, FormatError> {
            let f = std::fs::File::open(dir.join(format!("{}.csv", id.name())))?;
            ChannelGroup::from_table(id, &read_table(std::io::BufReader::new(f))?)
        };
        let velocity_path = dir.join("velocity.csv");
        Ok(Self {
            imu1: load(SensorId::Imu1)?,
            imu2: load(SensorId::Imu2)?,
            steering: load(SensorId::Steering)?,
            wheels: load(SensorId::Wheels)?,
            velocity: if velocity_path.exists() {
                Some(load(SensorId::Velocity)?)
            } else {
                None
            },
        })
    }
}

/// Emits every channel at its native rate with noise, IMU biases and freezes applied.
/// Each channel group draws from its own seeded stream, so the output is bit-identical
/// for identical inputs and a freeze on one sensor leaves the others untouched.
pub fn synthesize_sensors(trajectory: &Trajectory, plan: &SensorFaultPlan, seed: u64) -> RawSensorStream {
    let synth = |id| synth_group(trajectory, plan, seed, id);
    RawSensorStream {
        imu1: synth(SensorId::Imu1),
        imu2: synth(SensorId::Imu2),
        steering: synth(SensorId::Steering),
        wheels: synth(SensorId::Wheels),
        velocity: Some(synth(SensorId::Velocity)),
    }
}

fn gaussian(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma validated non-negative")
}

fn synth_group(trajectory: &Trajectory, plan: &SensorFaultPlan, seed: u64, id: SensorId) -> ChannelGroup {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id.stream_index());
    let n = &plan.noise;
    let mut g = ChannelGroup::new(id);
    if trajectory.is_empty() {
        return g;
    }
    let duration = trajectory.duration();
    let count = (duration * g.rate_hz + 1e-9).floor() as usize + 1;
    let freeze = plan.freeze_start(id);
    let mut held: Option<Vec<f64>> = None;
    let draw = |sigma: f64, rng: &mut ChaCha8Rng| gaussian(sigma).sample(rng);

    for k in 0..count {
        let t = k as f64 / g.rate_hz;
        let (s, c) = trajectory.sample_at(t);
        let row = match id {
            SensorId::Imu1 | SensorId::Imu2 => {
                let b = plan.imu_bias[if id == SensorId::Imu1 { 0 } else { 1 }];
                vec![
                    s.ax + b.ax + draw(n.accel, &mut rng),
                    s.ay + b.ay + draw(n.accel, &mut rng),
                    s.yaw_rate + b.gz + draw(n.gyro, &mut rng),
                ]
            }
            SensorId::Steering => vec![c.steering + draw(n.steering, &mut rng)],
            SensorId::Wheels => {
                let mut v = Vec::with_capacity(8);
                for w in s.wheel_omega {
                    v.push(w + draw(n.wheel_speed, &mut rng));
                }
                for tq in c.wheel_torques {
                    v.push(tq + draw(n.torque, &mut rng));
                }
                v
            }
            SensorId::Velocity => {
                let [px, py] = plan.velocity_sensor_offset;
                vec![
                    s.vx - s.yaw_rate * py + draw(n.velocity, &mut rng),
                    s.vy + s.yaw_rate * px + draw(n.velocity, &mut rng),
                ]
            }
        };
        let frozen = freeze.is_some_and(|t0| t > t0 + 1e-9);
        let row = match (&held, frozen) {
            (Some(h), true) => h.clone(),
            _ => row,
        };
        if !frozen {
            held = Some(row.clone());
        }
        g.times.push(t);
        g.values.push(row);
    }
    g
}
