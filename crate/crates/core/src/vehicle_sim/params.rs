use crate::io::{FormatError, KeyValues};

use super::tire::TireCoefficients;
use super::SimError;

pub const GRAVITY: f64 = 9.81;

/// Wheel order used everywhere: front-left, front-right, rear-left, rear-right.
pub const WHEEL_NAMES: [&str; 4] = ["fl", "fr", "rl", "rr"];

pub fn is_front(wheel: usize) -> bool {
    wheel < 2
}

/// Physical description of the simulated car and the geometry the filter relies on.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// kg·m²
    pub yaw_inertia: f64,
    /// (px, py) in the car frame, metres; x forward, y left.
    pub wheel_positions: [[f64; 2]; 4],
    /// m
    pub wheel_radius: [f64; 4],
    /// Effective spin inertia of wheel plus driveline, kg·m².
    pub wheel_inertia: f64,
    pub tire_long: TireCoefficients,
    pub tire_lat: TireCoefficients,
    /// Slope of the low-slip torque→slip-ratio map, 1/(N·m).
    pub torque_to_slip_gain: f64,
    /// Clamp of the low-slip map.
    pub slip_ratio_max: f64,
    /// rad
    pub max_steering: f64,
    /// N·m per wheel.
    pub max_wheel_torque: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        let tire_long = TireCoefficients::new(12.0, 1.65, 1.4, 0.6);
        let tire_lat = TireCoefficients::new(10.0, 1.9, 1.4, 0.97);
        let mut p = Self {
            mass: 250.0,
            yaw_inertia: 180.0,
            wheel_positions: [[0.8, 0.6], [0.8, -0.6], [-0.73, 0.6], [-0.73, -0.6]],
            wheel_radius: [0.2; 4],
            wheel_inertia: 0.3,
            tire_long,
            tire_lat,
            torque_to_slip_gain: 0.0,
            slip_ratio_max: 0.2,
            max_steering: 0.45,
            max_wheel_torque: 300.0,
        };
        p.torque_to_slip_gain = p.linear_torque_to_slip_gain();
        p
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |what: &str| Err(SimError::InvalidParams(what.to_string()));
        if !(self.mass > 0.0) {
            return bad("mass must be positive");
        }
        if !(self.yaw_inertia > 0.0) {
            return bad("yaw inertia must be positive");
        }
        if !(self.wheel_inertia > 0.0) {
            return bad("wheel inertia must be positive");
        }
        if self.wheel_radius.iter().any(|r| !(*r > 0.0)) {
            return bad("wheel radius must be positive");
        }
        for (i, p) in self.wheel_positions.iter().enumerate() {
            if is_front(i) && !(p[0] > 0.0) {
                return bad("front wheels need px > 0");
            }
            if !is_front(i) && !(p[0] < 0.0) {
                return bad("rear wheels need px < 0");
            }
        }
        if !(self.tire_long.d > 0.0 && self.tire_lat.d > 0.0) {
            return bad("tire D must be positive");
        }
        if !(self.slip_ratio_max > 0.0 && self.slip_ratio_max < 1.0) {
            return bad("slip_ratio_max must lie in (0, 1)");
        }
        Ok(())
    }

    /// Distance from the centre of gravity to the front axle.
    pub fn front_axle(&self) -> f64 {
        0.5 * (self.wheel_positions[0][0] + self.wheel_positions[1][0])
    }

    /// Distance from the centre of gravity to the rear axle (positive).
    pub fn rear_axle(&self) -> f64 {
        -0.5 * (self.wheel_positions[2][0] + self.wheel_positions[3][0])
    }

    pub fn wheelbase(&self) -> f64 {
        self.front_axle() + self.rear_axle()
    }

    /// Static normal loads, N.
    pub fn normal_loads(&self) -> [f64; 4] {
        let (lf, lr) = (self.front_axle(), self.rear_axle());
        let l = lf + lr;
        let w = self.mass * GRAVITY;
        let front = 0.5 * w * lr / l;
        let rear = 0.5 * w * lf / l;
        [front, front, rear, rear]
    }

    /// Gain matching the linear region of the longitudinal tire curve at mean wheel load.
    pub fn linear_torque_to_slip_gain(&self) -> f64 {
        let fz = self.mass * GRAVITY / 4.0;
        let r = self.wheel_radius.iter().sum::<f64>() / 4.0;
        1.0 / (r * fz * self.tire_long.cornering_stiffness())
    }

    /// Same car on a surface with `grip` times the nominal friction. The torque map is left
    /// as calibrated for nominal grip.
    pub fn with_grip(&self, grip: f64) -> Self {
        let mut p = self.clone();
        p.tire_long.d *= grip;
        p.tire_lat.d *= grip;
        p
    }

    pub fn write_kv(&self, kv: &mut KeyValues, prefix: &str) {
        let key = |k: &str| format!("{prefix}{k}");
        kv.set(&key("mass"), self.mass);
        kv.set(&key("yaw_inertia"), self.yaw_inertia);
        for (i, name) in WHEEL_NAMES.iter().enumerate() {
            kv.set(&key(&format!("px_{name}")), self.wheel_positions[i][0]);
            kv.set(&key(&format!("py_{name}")), self.wheel_positions[i][1]);
            kv.set(&key(&format!("radius_{name}")), self.wheel_radius[i]);
        }
        kv.set(&key("wheel_inertia"), self.wheel_inertia);
        for (tag, t) in [("long", &self.tire_long), ("lat", &self.tire_lat)] {
            kv.set(&key(&format!("tire_{tag}_b")), t.b);
            kv.set(&key(&format!("tire_{tag}_c")), t.c);
            kv.set(&key(&format!("tire_{tag}_d")), t.d);
            kv.set(&key(&format!("tire_{tag}_e")), t.e);
        }
        kv.set(&key("torque_to_slip_gain"), self.torque_to_slip_gain);
        kv.set(&key("slip_ratio_max"), self.slip_ratio_max);
        kv.set(&key("max_steering"), self.max_steering);
        kv.set(&key("max_wheel_torque"), self.max_wheel_torque);
    }

    /// Reads parameters written by [`write_kv`](Self::write_kv); absent keys keep defaults.
    pub fn from_kv(kv: &KeyValues, prefix: &str) -> Result<Self, FormatError> {
        let d = Self::default();
        let key = |k: &str| format!("{prefix}{k}");
        let mut p = d.clone();
        p.mass = kv.parse_or(&key("mass"), d.mass)?;
        p.yaw_inertia = kv.parse_or(&key("yaw_inertia"), d.yaw_inertia)?;
        for (i, name) in WHEEL_NAMES.iter().enumerate() {
            p.wheel_positions[i][0] =
                kv.parse_or(&key(&format!("px_{name}")), d.wheel_positions[i][0])?;
            p.wheel_positions[i][1] =
                kv.parse_or(&key(&format!("py_{name}")), d.wheel_positions[i][1])?;
            p.wheel_radius[i] = kv.parse_or(&key(&format!("radius_{name}")), d.wheel_radius[i])?;
        }
        p.wheel_inertia = kv.parse_or(&key("wheel_inertia"), d.wheel_inertia)?;
        for (tag, t, dt) in [
            ("long", &mut p.tire_long, d.tire_long),
            ("lat", &mut p.tire_lat, d.tire_lat),
        ] {
            t.b = kv.parse_or(&key(&format!("tire_{tag}_b")), dt.b)?;
            t.c = kv.parse_or(&key(&format!("tire_{tag}_c")), dt.c)?;
            t.d = kv.parse_or(&key(&format!("tire_{tag}_d")), dt.d)?;
            t.e = kv.parse_or(&key(&format!("tire_{tag}_e")), dt.e)?;
        }
        p.torque_to_slip_gain = kv.parse_or(&key("torque_to_slip_gain"), d.torque_to_slip_gain)?;
        p.slip_ratio_max = kv.parse_or(&key("slip_ratio_max"), d.slip_ratio_max)?;
        p.max_steering = kv.parse_or(&key("max_steering"), d.max_steering)?;
        p.max_wheel_torque = kv.parse_or(&key("max_wheel_torque"), d.max_wheel_torque)?;
        p.validate()
            .map_err(|e| FormatError::Invalid(e.to_string()))?;
        Ok(p)
    }
}
