use std::fmt;
use std::str::FromStr;

use crate::io::KeyValues;
use crate::vehicle_sim::{slip_ratio_from_torque, VehicleParams, WHEEL_NAMES};

use super::MkfError;

/// Process and measurement noise plus the unscented-transform and gate settings.
///
/// Defaults were tuned once against the bundled simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    /// PSD of the velocity process noise, (m/s²)²·s.
    pub q_velocity: [f64; 2],
    /// PSD of the yaw acceleration, (rad/s²)²·s.
    pub q_yaw_rate: f64,
    /// PSD of the jerk, (m/s³)²·s.
    pub q_accel: [f64; 2],
    /// Variance of each acceleration axis, per IMU.
    pub r_accel: [f64; 2],
    /// Variance of the gyro, per IMU.
    pub r_gyro: [f64; 2],
    /// Variance of each axis of the wheel-derived velocity.
    pub r_wheel_velocity: f64,
    pub r_ext_velocity: f64,
    pub ukf_alpha: f64,
    pub ukf_beta: f64,
    pub ukf_kappa: f64,
    /// Gate thresholds on the squared Mahalanobis distance for 1-, 2- and 3-dimensional
    /// measurements (chi-square 99% quantiles by default).
    pub gate: [f64; 3],
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            q_velocity: [0.02, 0.02],
            q_yaw_rate: 1.0,
            q_accel: [3000.0, 3000.0],
            r_accel: [0.05 * 0.05; 2],
            r_gyro: [0.004 * 0.004; 2],
            r_wheel_velocity: 0.15 * 0.15,
            r_ext_velocity: 0.05 * 0.05,
            ukf_alpha: 0.1,
            ukf_beta: 2.0,
            ukf_kappa: 0.0,
            gate: [6.635, 9.210, 11.345],
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), MkfError> {
        let positive = self
            .q_velocity
            .iter()
            .chain(&self.q_accel)
            .chain(&self.r_accel)
            .chain(&self.r_gyro)
            .chain([&self.q_yaw_rate, &self.r_wheel_velocity, &self.r_ext_velocity])
            .chain(&self.gate)
            .all(|&x| x > 0.0 && x.is_finite());
        if !positive {
            return Err(MkfError::InvalidConfig(
                "noise variances and gate thresholds must be positive".into(),
            ));
        }
        if !(self.ukf_alpha > 0.0 && self.ukf_alpha <= 1.0) {
            return Err(MkfError::InvalidConfig(format!(
                "ukf_alpha {} outside (0, 1]",
                self.ukf_alpha
            )));
        }
        if !self.ukf_beta.is_finite() || !(5.0 + self.ukf_kappa > 0.0) {
            return Err(MkfError::InvalidConfig("ukf_beta/ukf_kappa out of range".into()));
        }
        Ok(())
    }

    /// Threshold for a measurement of dimension `dim` (1..=3).
    pub fn gate_threshold(&self, dim: usize) -> f64 {
        self.gate[dim.clamp(1, 3) - 1]
    }
}

/// Wheel positions, radii and the torque-to-slip map the filter assumes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelGeometry {
    pub positions: [[f64; 2]; 4],
    pub radius: [f64; 4],
    pub torque_to_slip_gain: f64,
    pub slip_ratio_max: f64,
}

impl WheelGeometry {
    pub fn from_params(p: &VehicleParams) -> Self {
        Self {
            positions: p.wheel_positions,
            radius: p.wheel_radius,
            torque_to_slip_gain: p.torque_to_slip_gain,
            slip_ratio_max: p.slip_ratio_max,
        }
    }

    pub fn slip_ratio(&self, torque: f64) -> f64 {
        slip_ratio_from_torque(torque, self.torque_to_slip_gain, self.slip_ratio_max)
    }
}

impl Default for WheelGeometry {
    fn default() -> Self {
        Self::from_params(&VehicleParams::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterMode {
    /// Fuses the external velocity sensor as well.
    Reference,
    /// Onboard sensors only.
    Baseline,
}

impl FromStr for FilterMode {
    type Err = MkfError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reference" => Ok(Self::Reference),
            "baseline" => Ok(Self::Baseline),
            other => Err(MkfError::InvalidConfig(format!("unknown mode `{other}`"))),
        }
    }
}

impl fmt::Display for FilterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Reference => "reference",
            Self::Baseline => "baseline",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MkfConfig {
    pub mode: FilterMode,
    pub noise: NoiseConfig,
    pub geometry: WheelGeometry,
    /// Mounting position of the external velocity sensor, m.
    pub ext_sensor_offset: [f64; 2],
    /// Standstill averaging window at the start of the stream, s. Zero disables calibration.
    pub calibration_window: f64,
    /// A channel repeating the identical value for longer than this is skipped, s.
    pub stale_after: f64,
    /// After a channel has been rejected continuously for this long, the next sample is
    /// applied without gating so the filter can recover from its own divergence, s.
    pub gate_reset_after: f64,
    pub initial_variance: [f64; 5],
}

impl Default for MkfConfig {
    fn default() -> Self {
        Self {
            mode: FilterMode::Baseline,
            noise: NoiseConfig::default(),
            geometry: WheelGeometry::default(),
            ext_sensor_offset: [0.5, 0.0],
            calibration_window: 1.5,
            stale_after: 0.1,
            gate_reset_after: 0.5,
            initial_variance: [0.1, 0.1, 0.01, 0.5, 0.5],
        }
    }
}

const NOISE_KEYS: [&str; 15] = [
    "q_vx", "q_vy", "q_yaw_rate", "q_ax", "q_ay", "r_imu1_accel", "r_imu2_accel", "r_imu1_gyro",
    "r_imu2_gyro", "r_wheel_velocity", "r_ext_velocity", "ukf_alpha", "ukf_beta", "ukf_kappa",
    "gate_1d",
];

impl MkfConfig {
    pub fn with_mode(mut self, mode: FilterMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<(), MkfError> {
        self.noise.validate()?;
        if self.initial_variance.iter().any(|&v| !(v > 0.0)) {
            return Err(MkfError::InvalidConfig("initial variances must be positive".into()));
        }
        if self.geometry.radius.iter().any(|&r| !(r > 0.0)) {
            return Err(MkfError::InvalidConfig("wheel radii must be positive".into()));
        }
        if !(self.geometry.slip_ratio_max >= 0.0 && self.geometry.slip_ratio_max < 1.0) {
            return Err(MkfError::InvalidConfig("slip_ratio_max must lie in [0, 1)".into()));
        }
        if !(self.stale_after > 0.0) || !(self.gate_reset_after > 0.0) {
            return Err(MkfError::InvalidConfig("stale_after and gate_reset_after must be positive".into()));
        }
        if !(self.calibration_window >= 0.0) {
            return Err(MkfError::InvalidConfig("calibration_window must be >= 0".into()));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KeyValues {
        let n = &self.noise;
        let mut kv = KeyValues::new();
        kv.set("mode", self.mode);
        let values = [
            n.q_velocity[0],
            n.q_velocity[1],
            n.q_yaw_rate,
            n.q_accel[0],
            n.q_accel[1],
            n.r_accel[0],
            n.r_accel[1],
            n.r_gyro[0],
            n.r_gyro[1],
            n.r_wheel_velocity,
            n.r_ext_velocity,
            n.ukf_alpha,
            n.ukf_beta,
            n.ukf_kappa,
            n.gate[0],
        ];
        for (k, v) in NOISE_KEYS.iter().zip(values) {
            kv.set(k, v);
        }
        kv.set("gate_2d", n.gate[1]);
        kv.set("gate_3d", n.gate[2]);
        kv.set("ext_px", self.ext_sensor_offset[0]);
        kv.set("ext_py", self.ext_sensor_offset[1]);
        kv.set("calibration_window", self.calibration_window);
        kv.set("stale_after", self.stale_after);
        kv.set("gate_reset_after", self.gate_reset_after);
        for (k, v) in ["p0_vx", "p0_vy", "p0_yaw_rate", "p0_ax", "p0_ay"]
            .iter()
            .zip(self.initial_variance)
        {
            kv.set(k, v);
        }
        for (i, name) in WHEEL_NAMES.iter().enumerate() {
            kv.set(&format!("vehicle.px_{name}"), self.geometry.positions[i][0]);
            kv.set(&format!("vehicle.py_{name}"), self.geometry.positions[i][1]);
            kv.set(&format!("vehicle.radius_{name}"), self.geometry.radius[i]);
        }
        kv.set("vehicle.torque_to_slip_gain", self.geometry.torque_to_slip_gain);
        kv.set("vehicle.slip_ratio_max", self.geometry.slip_ratio_max);
        kv
    }

    /// Absent keys keep their defaults.
    pub fn from_kv(kv: &KeyValues) -> Result<Self, MkfError> {
        let d = Self::default();
        let dn = &d.noise;
        let mut c = d.clone();
        if let Some(m) = kv.get("mode") {
            c.mode = m.parse()?;
        }
        let n = &mut c.noise;
        n.q_velocity = [kv.parse_or("q_vx", dn.q_velocity[0])?, kv.parse_or("q_vy", dn.q_velocity[1])?];
        n.q_yaw_rate = kv.parse_or("q_yaw_rate", dn.q_yaw_rate)?;
        n.q_accel = [kv.parse_or("q_ax", dn.q_accel[0])?, kv.parse_or("q_ay", dn.q_accel[1])?];
        n.r_accel = [
            kv.parse_or("r_imu1_accel", dn.r_accel[0])?,
            kv.parse_or("r_imu2_accel", dn.r_accel[1])?,
        ];
        n.r_gyro = [
            kv.parse_or("r_imu1_gyro", dn.r_gyro[0])?,
            kv.parse_or("r_imu2_gyro", dn.r_gyro[1])?,
        ];
        n.r_wheel_velocity = kv.parse_or("r_wheel_velocity", dn.r_wheel_velocity)?;
        n.r_ext_velocity = kv.parse_or("r_ext_velocity", dn.r_ext_velocity)?;
        n.ukf_alpha = kv.parse_or("ukf_alpha", dn.ukf_alpha)?;
        n.ukf_beta = kv.parse_or("ukf_beta", dn.ukf_beta)?;
        n.ukf_kappa = kv.parse_or("ukf_kappa", dn.ukf_kappa)?;
        n.gate = [
            kv.parse_or("gate_1d", dn.gate[0])?,
            kv.parse_or("gate_2d", dn.gate[1])?,
            kv.parse_or("gate_3d", dn.gate[2])?,
        ];
        c.ext_sensor_offset = [
            kv.parse_or("ext_px", d.ext_sensor_offset[0])?,
            kv.parse_or("ext_py", d.ext_sensor_offset[1])?,
        ];
        c.calibration_window = kv.parse_or("calibration_window", d.calibration_window)?;
        c.stale_after = kv.parse_or("stale_after", d.stale_after)?;
        c.gate_reset_after = kv.parse_or("gate_reset_after", d.gate_reset_after)?;
        for (i, k) in ["p0_vx", "p0_vy", "p0_yaw_rate", "p0_ax", "p0_ay"].iter().enumerate() {
            c.initial_variance[i] = kv.parse_or(k, d.initial_variance[i])?;
        }
        let vehicle = VehicleParams::from_kv(kv, "vehicle.")?;
        c.geometry = WheelGeometry::from_params(&vehicle);
        c.validate()?;
        Ok(c)
    }

    pub fn parse(text: &str) -> Result<Self, MkfError> {
        Self::from_kv(&KeyValues::parse(text)?)
    }
}
