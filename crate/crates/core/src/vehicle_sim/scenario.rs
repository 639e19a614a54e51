//! Closed-loop driving scenarios. Every scenario begins with the car at rest for
//! [`STANDSTILL_PREFIX`] seconds so downstream bias calibration has a quiet window.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::io::{FormatError, KeyValues};

use super::dynamics::{
    rear_axle_sideslip, step_dynamics, wheel_kinematics, Controls, GroundTruthState,
};
use super::params::{VehicleParams, GRAVITY};
use super::sensors::{
    synthesize_sensors, FreezeEvent, ImuBias, NoiseSigmas, RawSensorStream, SensorFaultPlan,
    SensorId, Trajectory, TRUTH_RATE_HZ,
};
use super::SimError;

pub const STANDSTILL_PREFIX: f64 = 2.0;
/// Internal integration step.
pub const SIM_DT: f64 = 1e-3;
const SUBSTEPS: usize = 5;

/// Launch must reach this per-wheel slip ratio.
pub const LAUNCH_MIN_SLIP: f64 = 0.15;
/// High-slip cornering must reach this rear-axle sideslip, rad.
pub const HIGH_SLIP_MIN_SIDESLIP: f64 = 8.0 * PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    Standstill,
    Launch,
    Slalom,
    HighSlipCorner,
    TrackLap,
    ImuFreezeLap,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 6] = [
        ScenarioKind::Standstill,
        ScenarioKind::Launch,
        ScenarioKind::Slalom,
        ScenarioKind::HighSlipCorner,
        ScenarioKind::TrackLap,
        ScenarioKind::ImuFreezeLap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Standstill => "standstill",
            ScenarioKind::Launch => "launch",
            ScenarioKind::Slalom => "slalom",
            ScenarioKind::HighSlipCorner => "high_slip_corner",
            ScenarioKind::TrackLap => "track_lap",
            ScenarioKind::ImuFreezeLap => "imu_freeze_lap",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SimError::UnknownScenario(s.to_string()))
    }
}

/// Road surface class; only grip and sensor noise differ between classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SurfaceClass {
    Flat,
    Gravel,
    Bumpy,
    Wet,
}

impl SurfaceClass {
    pub const ALL: [SurfaceClass; 4] = [
        SurfaceClass::Flat,
        SurfaceClass::Gravel,
        SurfaceClass::Bumpy,
        SurfaceClass::Wet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SurfaceClass::Flat => "flat",
            SurfaceClass::Gravel => "gravel",
            SurfaceClass::Bumpy => "bumpy",
            SurfaceClass::Wet => "wet",
        }
    }

    pub fn grip(self) -> f64 {
        match self {
            SurfaceClass::Flat => 1.0,
            SurfaceClass::Gravel => 0.75,
            SurfaceClass::Bumpy => 0.9,
            SurfaceClass::Wet => 0.65,
        }
    }

    pub fn noise_scale(self) -> f64 {
        match self {
            SurfaceClass::Flat => 1.0,
            SurfaceClass::Gravel => 1.5,
            SurfaceClass::Bumpy => 2.5,
            SurfaceClass::Wet => 1.0,
        }
    }
}

impl fmt::Display for SurfaceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SurfaceClass {
    type Err = FormatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| FormatError::Invalid(format!("unknown surface `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub duration: f64,
    pub seed: u64,
    pub surface: SurfaceClass,
    /// Nominal car; surface grip is applied on top.
    pub vehicle: VehicleParams,
    /// Explicit sensor plan. When `None` the plan is drawn from the seed: random IMU
    /// biases, surface-scaled noise and the scenario's own freeze events.
    pub plan: Option<SensorFaultPlan>,
}

impl ScenarioConfig {
    pub fn new(kind: ScenarioKind, duration: f64, seed: u64) -> Self {
        Self {
            kind,
            duration,
            seed,
            surface: SurfaceClass::Flat,
            vehicle: VehicleParams::default(),
            plan: None,
        }
    }

    pub fn with_surface(mut self, surface: SurfaceClass) -> Self {
        self.surface = surface;
        self
    }

    pub fn with_plan(mut self, plan: SensorFaultPlan) -> Self {
        self.plan = Some(plan);
        self
    }

    /// Car actually driven: nominal parameters at the surface's grip.
    pub fn driven_vehicle(&self) -> VehicleParams {
        self.vehicle.with_grip(self.surface.grip())
    }

    pub fn resolved_plan(&self) -> SensorFaultPlan {
        if let Some(p) = &self.plan {
            return p.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_b1a5);
        let mut bias = || ImuBias {
            ax: rng.random_range(-0.3..=0.3),
            ay: rng.random_range(-0.3..=0.3),
            gz: rng.random_range(-0.01..=0.01),
        };
        let imu_bias = [bias(), bias()];
        let mut plan = SensorFaultPlan {
            imu_bias,
            noise: NoiseSigmas::default().scaled(self.surface.noise_scale()),
            ..SensorFaultPlan::default()
        };
        if self.kind == ScenarioKind::ImuFreezeLap {
            plan.freeze_events.push(FreezeEvent {
                sensor: SensorId::Imu2,
                t_start: (0.5 * self.duration * TRUTH_RATE_HZ).round() / TRUTH_RATE_HZ,
            });
        }
        plan
    }
}

/// Conditions reached during a run, measured from simulator internals.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AchievedConditions {
    pub max_slip_ratio: f64,
    /// rad
    pub max_rear_sideslip: f64,
    pub max_speed: f64,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub config: ScenarioConfig,
    pub plan: SensorFaultPlan,
    pub trajectory: Trajectory,
    pub raw: RawSensorStream,
    pub achieved: AchievedConditions,
}

impl ScenarioOutput {
    pub fn manifest(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("scenario", self.config.kind);
        kv.set("seed", self.config.seed);
        kv.set("duration", self.config.duration);
        kv.set("surface", self.config.surface);
        kv.set("grip", self.config.surface.grip());
        for (i, b) in self.plan.imu_bias.iter().enumerate() {
            kv.set(&format!("imu{}_bias_ax", i + 1), b.ax);
            kv.set(&format!("imu{}_bias_ay", i + 1), b.ay);
            kv.set(&format!("imu{}_bias_gz", i + 1), b.gz);
        }
        let n = &self.plan.noise;
        kv.set("noise_accel", n.accel);
        kv.set("noise_gyro", n.gyro);
        kv.set("noise_wheel_speed", n.wheel_speed);
        kv.set("noise_torque", n.torque);
        kv.set("noise_steering", n.steering);
        kv.set("noise_velocity", n.velocity);
        let freezes: Vec<String> = self
            .plan
            .freeze_events
            .iter()
            .map(|e| format!("{}@{}", e.sensor, e.t_start))
            .collect();
        kv.set("freeze_events", freezes.join(","));
        kv.set("launch_slip_ratio", self.plan.launch_slip_ratio);
        kv.set("velocity_sensor_px", self.plan.velocity_sensor_offset[0]);
        kv.set("velocity_sensor_py", self.plan.velocity_sensor_offset[1]);
        kv.set("achieved_max_slip_ratio", self.achieved.max_slip_ratio);
        kv.set(
            "achieved_max_rear_sideslip_deg",
            self.achieved.max_rear_sideslip.to_degrees(),
        );
        // The estimator only knows the nominal car, never the surface grip.
        self.config.vehicle.write_kv(&mut kv, "vehicle.");
        kv
    }

    /// Writes sensor CSVs, `truth.csv` and `manifest.txt` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), FormatError> {
        self.raw.write_dir(dir)?;
        let f = std::fs::File::create(dir.join("truth.csv"))?;
        crate::io::write_table(std::io::BufWriter::new(f), &self.trajectory.to_table())?;
        std::fs::write(dir.join("manifest.txt"), self.manifest().to_text())?;
        Ok(())
    }
}

/// Reads the freeze-event list written into a manifest.
pub fn parse_freeze_events(text: &str) -> Result<Vec<FreezeEvent>, FormatError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (sensor, t) = item
                .split_once('@')
                .ok_or_else(|| FormatError::Invalid(format!("bad freeze event {item:?}")))?;
            let t_start: f64 = t
                .parse()
                .map_err(|_| FormatError::Invalid(format!("bad freeze time {t:?}")))?;
            Ok(FreezeEvent {
                sensor: sensor.parse()?,
                t_start,
            })
        })
        .collect()
}

/// Runs `name` with default surface and a seed-drawn sensor plan.
pub fn run_scenario(
    name: &str,
    duration: f64,
    seed: u64,
) -> Result<(Trajectory, RawSensorStream), SimError> {
    let out = simulate(&ScenarioConfig::new(name.parse()?, duration, seed))?;
    Ok((out.trajectory, out.raw))
}

pub fn simulate(config: &ScenarioConfig) -> Result<ScenarioOutput, SimError> {
    if !(config.duration > STANDSTILL_PREFIX) {
        return Err(SimError::InvalidDuration(config.duration));
    }
    let params = config.driven_vehicle();
    params.validate()?;
    let plan = config.resolved_plan();
    plan.validate(config.duration)
        .map_err(|e| SimError::InvalidParams(e.to_string()))?;

    let mut driver = Driver::new(config, &params, &plan);
    let frames = (config.duration * TRUTH_RATE_HZ).round() as usize;
    let mut state = driver.initial_state();
    let mut states = Vec::with_capacity(frames + 1);
    let mut controls = Vec::with_capacity(frames + 1);
    let mut achieved = AchievedConditions::default();
    states.push(state);
    for j in 0..frames {
        let mut applied = Controls::default();
        for k in 0..SUBSTEPS {
            let c = driver.control(&state).clamped(&params);
            if k == 0 {
                applied = c;
            }
            state = step_dynamics(&state, &c, &params, SIM_DT)?;
            track_conditions(&state, &c, &params, &mut achieved);
        }
        controls.push(applied);
        state.time = (j + 1) as f64 / TRUTH_RATE_HZ;
        states.push(state);
    }
    controls.push(*controls.last().unwrap_or(&Controls::default()));

    let reached = match config.kind {
        ScenarioKind::Launch => achieved.max_slip_ratio >= LAUNCH_MIN_SLIP,
        ScenarioKind::HighSlipCorner => achieved.max_rear_sideslip >= HIGH_SLIP_MIN_SIDESLIP,
        _ => true,
    };
    if !reached {
        return Err(SimError::ScenarioUnreachable {
            scenario: config.kind.name().to_string(),
            detail: format!(
                "max slip ratio {:.3}, max rear sideslip {:.2} deg",
                achieved.max_slip_ratio,
                achieved.max_rear_sideslip.to_degrees()
            ),
        });
    }

    let trajectory = Trajectory {
        params,
        states,
        controls,
    };
    let raw = synthesize_sensors(&trajectory, &plan, config.seed);
    Ok(ScenarioOutput {
        config: config.clone(),
        plan,
        trajectory,
        raw,
        achieved,
    })
}

fn track_conditions(
    s: &GroundTruthState,
    c: &Controls,
    p: &VehicleParams,
    acc: &mut AchievedConditions,
) {
    acc.max_speed = acc.max_speed.max(s.vx);
    if s.vx > 1.0 {
        for i in 0..4 {
            let k = wheel_kinematics(s, c.steering, p, i);
            acc.max_slip_ratio = acc.max_slip_ratio.max(k.slip_ratio.abs());
        }
    }
    if s.vx > 3.0 {
        acc.max_rear_sideslip = acc.max_rear_sideslip.max(rear_axle_sideslip(s, p).abs());
    }
}

/// Closed path sampled at uniform arc length.
#[derive(Debug, Clone)]
struct Path2 {
    points: Vec<[f64; 2]>,
    heading: Vec<f64>,
    speed: Vec<f64>,
    spacing: f64,
}

impl Path2 {
    fn track(rng: &mut ChaCha8Rng, params: &VehicleParams, lateral_use: f64) -> Self {
        let r0 = rng.random_range(35.0..50.0);
        let a1 = rng.random_range(0.10..0.25);
        let a2 = rng.random_range(0.05..0.15);
        let p1 = rng.random_range(0.0..2.0 * PI);
        let p2 = rng.random_range(0.0..2.0 * PI);
        let dense = 4000;
        let raw: Vec<[f64; 2]> = (0..dense)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / dense as f64;
                let r = r0 * (1.0 + a1 * (2.0 * th + p1).sin() + a2 * (3.0 * th + p2).sin());
                [r * th.cos(), r * th.sin()]
            })
            .collect();
        Self::from_closed_polyline(&raw, 0.5, params, lateral_use, 18.0)
    }

    fn from_closed_polyline(
        raw: &[[f64; 2]],
        spacing: f64,
        params: &VehicleParams,
        lateral_use: f64,
        v_top: f64,
    ) -> Self {
        // Resample at uniform arc length.
        let n = raw.len();
        let mut cum = vec![0.0; n + 1];
        for k in 0..n {
            let a = raw[k];
            let b = raw[(k + 1) % n];
            cum[k + 1] = cum[k] + (b[0] - a[0]).hypot(b[1] - a[1]);
        }
        let total = cum[n];
        let m = (total / spacing).floor() as usize;
        let spacing = total / m as f64;
        let mut points = Vec::with_capacity(m);
        let mut seg = 0;
        for i in 0..m {
            let s = i as f64 * spacing;
            while cum[seg + 1] < s {
                seg += 1;
            }
            let f = (s - cum[seg]) / (cum[seg + 1] - cum[seg]);
            let a = raw[seg];
            let b = raw[(seg + 1) % n];
            points.push([a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]);
        }
        let heading: Vec<f64> = (0..m)
            .map(|i| {
                let a = points[(i + m - 1) % m];
                let b = points[(i + 1) % m];
                (b[1] - a[1]).atan2(b[0] - a[0])
            })
            .collect();
        let curvature: Vec<f64> = (0..m)
            .map(|i| {
                let d = wrap_angle(heading[(i + 1) % m] - heading[(i + m - 1) % m]);
                d / (2.0 * spacing)
            })
            .collect();
        let a_lat = lateral_use * params.tire_lat.d * GRAVITY;
        let mut speed: Vec<f64> = curvature
            .iter()
            .map(|k| (a_lat / k.abs().max(1e-4)).sqrt().min(v_top))
            .collect();
        // Braking and traction limits, iterated around the loop.
        let (a_brake, a_drive) = (0.5 * params.tire_long.d * GRAVITY, 4.0);
        for _ in 0..2 {
            for i in (0..m).rev() {
                let next = speed[(i + 1) % m];
                speed[i] = speed[i].min((next * next + 2.0 * a_brake * spacing).sqrt());
            }
            for i in 0..m {
                let prev = speed[(i + m - 1) % m];
                speed[(i) % m] = speed[i].min((prev * prev + 2.0 * a_drive * spacing).sqrt());
            }
        }
        Self {
            points,
            heading,
            speed,
            spacing,
        }
    }
}

fn wrap_angle(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

enum Plan {
    Idle,
    Launch { slip_target: f64, v_stop: f64 },
    Slalom { amplitude: f64, freq: f64, speed: f64 },
    Pursuit { path: Path2, index: usize },
    Drift { radius: f64, speed: f64, sideslip_target: f64 },
}

struct Driver {
    plan: Plan,
    params: VehicleParams,
    time: f64,
    launch_integral: [f64; 4],
    launch_done: bool,
    drift_integral: f64,
    initial: GroundTruthState,
}

impl Driver {
    fn new(config: &ScenarioConfig, params: &VehicleParams, fault: &SensorFaultPlan) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut initial = GroundTruthState::default();
        let plan = match config.kind {
            ScenarioKind::Standstill => Plan::Idle,
            ScenarioKind::Launch => Plan::Launch {
                slip_target: fault.launch_slip_ratio,
                v_stop: rng.random_range(18.0..24.0),
            },
            ScenarioKind::Slalom => Plan::Slalom {
                amplitude: rng.random_range(0.06..0.12),
                freq: rng.random_range(0.35..0.6),
                speed: rng.random_range(9.0..14.0),
            },
            ScenarioKind::TrackLap | ScenarioKind::ImuFreezeLap => {
                let use_frac = rng.random_range(0.7..0.88);
                let path = Path2::track(&mut rng, params, use_frac);
                initial.x = path.points[0][0];
                initial.y = path.points[0][1];
                initial.heading = path.heading[0];
                Plan::Pursuit { path, index: 0 }
            }
            ScenarioKind::HighSlipCorner => Plan::Drift {
                radius: rng.random_range(12.0..18.0),
                speed: 0.0,
                sideslip_target: rng.random_range(10.0f64..12.0).to_radians(),
            },
        };
        let mut d = Self {
            plan,
            params: params.clone(),
            time: 0.0,
            launch_integral: [0.0; 4],
            launch_done: false,
            drift_integral: 0.0,
            initial,
        };
        if let Plan::Drift { radius, speed, .. } = &mut d.plan {
            *speed = (0.9 * params.tire_lat.d * GRAVITY * *radius).sqrt();
        }
        d
    }

    fn initial_state(&self) -> GroundTruthState {
        self.initial
    }

    fn speed_torque(&self, s: &GroundTruthState, v_ref: f64, gain: f64) -> [f64; 4] {
        let a_cmd = (gain * (v_ref - s.vx)).clamp(-6.0, 4.0);
        let t = self.params.mass * a_cmd * self.params.wheel_radius[0] / 4.0;
        [t; 4]
    }

    fn control(&mut self, s: &GroundTruthState) -> Controls {
        self.time += SIM_DT;
        let t_drive = self.time - STANDSTILL_PREFIX;
        if t_drive < 0.0 {
            return Controls::default();
        }
        let params = self.params.clone();
        match &mut self.plan {
            Plan::Idle => Controls::default(),
            Plan::Launch { slip_target, v_stop } => {
                let slip_target = *slip_target;
                if !self.launch_done && s.vx >= *v_stop {
                    self.launch_done = true;
                }
                if self.launch_done {
                    // Controlled stop, then rest.
                    let wheel_torques = if s.vx > 0.2 {
                        self.speed_torque(s, 0.0, 0.8)
                    } else {
                        [0.0; 4]
                    };
                    return Controls {
                        steering: 0.0,
                        wheel_torques,
                    };
                }
                let loads = params.normal_loads();
                let mut wheel_torques = [0.0; 4];
                for (i, torque) in wheel_torques.iter_mut().enumerate() {
                    let k = wheel_kinematics(s, 0.0, &params, i);
                    let ff = params.wheel_radius[i] * loads[i] * params.tire_long.eval(slip_target);
                    let err = slip_target - k.slip_ratio;
                    self.launch_integral[i] += err * SIM_DT;
                    *torque = ff + 400.0 * err + 2000.0 * self.launch_integral[i];
                }
                Controls {
                    steering: 0.0,
                    wheel_torques,
                }
            }
            Plan::Slalom {
                amplitude,
                freq,
                speed,
            } => {
                let (amplitude, freq, speed) = (*amplitude, *freq, *speed);
                let steering = if t_drive > 3.0 {
                    amplitude * (2.0 * PI * freq * (t_drive - 3.0)).sin()
                } else {
                    0.0
                };
                Controls {
                    steering,
                    wheel_torques: self.speed_torque(s, speed, 1.5),
                }
            }
            Plan::Pursuit { path, index } => {
                let m = path.points.len();
                // Advance the closest-point index within a short forward window.
                let mut best = *index;
                let mut best_d = f64::INFINITY;
                for off in 0..40 {
                    let i = (*index + off) % m;
                    let p = path.points[i];
                    let d = (p[0] - s.x).hypot(p[1] - s.y);
                    if d < best_d {
                        best_d = d;
                        best = i;
                    }
                }
                *index = best;
                let lookahead = (0.35 * s.vx).max(3.0);
                let ahead = (best + (lookahead / path.spacing).round() as usize) % m;
                let target = path.points[ahead];
                let (dx, dy) = (target[0] - s.x, target[1] - s.y);
                let (sh, ch) = s.heading.sin_cos();
                let ly = -sh * dx + ch * dy;
                let ld2 = dx * dx + dy * dy;
                let curvature = 2.0 * ly / ld2.max(1e-6);
                let mut steering = (params.wheelbase() * curvature).atan();
                let mut v_ref = path.speed[(best + 6) % m];
                // Countersteer and lift when the rear steps out.
                let beta = rear_axle_sideslip(s, &params);
                let limit = 6f64.to_radians();
                let excess = beta - beta.clamp(-limit, limit);
                if excess != 0.0 {
                    steering += 2.0 * excess;
                    v_ref *= 0.9;
                }
                Controls {
                    steering,
                    wheel_torques: self.speed_torque(s, v_ref, 1.5),
                }
            }
            Plan::Drift {
                radius,
                speed,
                sideslip_target,
            } => {
                let (radius, speed, sideslip_target) = (*radius, *speed, *sideslip_target);
                let params = &params;
                let r_ref = s.vx.max(0.0) / radius;
                let ff = (params.wheelbase() / radius).atan();
                let mut steering = ff + 0.6 * (r_ref - s.yaw_rate);
                let mut wheel_torques = self.speed_torque(s, speed, 1.5);
                if t_drive > 5.0 {
                    // Yaw moment from rear torque vectoring pushes the rear axle to
                    // the target sideslip; steering catches the resulting yaw rate.
                    // Rear slides outward: negative axle sideslip in a left-hand turn.
                    let slide = -rear_axle_sideslip(s, params);
                    self.drift_integral += (sideslip_target - slide) * SIM_DT;
                    let mz = 12000.0 * (sideslip_target - slide) + 6000.0 * self.drift_integral;
                    let dt = (mz * params.wheel_radius[2] / (2.0 * params.wheel_positions[2][1]))
                        .clamp(-250.0, 250.0);
                    wheel_torques[2] -= 0.5 * dt;
                    wheel_torques[3] += 0.5 * dt;
                    steering += 0.3 * (sideslip_target - slide);
                }
                if t_drive > 14.0 {
                    // Recover and stop.
                    steering = 0.0;
                    wheel_torques = self.speed_torque(s, 0.0, 0.8);
                }
                Controls {
                    steering,
                    wheel_torques,
                }
            }
        }
    }
}
