//! Mixed Kalman filter: EKF propagation, linear IMU updates and an unscented update for
//! velocities derived from wheel speeds (or from an external velocity sensor).

mod config;
mod filter;
mod run;
mod ukf;

pub use config::{FilterMode, MkfConfig, NoiseConfig, WheelGeometry};
pub use filter::{
    ekf_propagate, lkf_update_imu, propagate_mean, propagation_jacobian, select_min_slip_wheel,
    ukf_update_external_velocity, ukf_update_velocity, velocity_at, wheel_velocity,
    WheelObservation,
};
pub use run::{
    calibrate_standstill, estimates_from_table, estimates_to_table, read_estimates, run_filter,
    write_estimates, ImuCalibration, ESTIMATE_HEADER,
};
pub use ukf::{sigma_weights, unscented_update, SigmaWeights};

use nalgebra::{SMatrix, SVector};
use thiserror::Error;

use crate::io::FormatError;

pub type Vector5 = SVector<f64, 5>;
pub type Matrix5 = SMatrix<f64, 5, 5>;

/// Index of each quantity in the state vector.
pub const VX: usize = 0;
pub const VY: usize = 1;
pub const YAW_RATE: usize = 2;
pub const AX: usize = 3;
pub const AY: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum MkfError {
    #[error("covariance lost positive definiteness at t = {time} s")]
    CovarianceNotPD { time: f64 },
    #[error("measurement rejected by gate: distance² {distance2:.3} > {threshold:.3}")]
    GateRejected { distance2: f64, threshold: f64 },
    #[error("calibration window too short: {available} s available, {required} s required")]
    WindowTooShort { available: f64, required: f64 },
    #[error("time step {0} s outside (0, 0.02]")]
    InvalidStep(f64),
    #[error("unknown IMU index {0}")]
    UnknownImu(usize),
    #[error("invalid filter configuration: {0}")]
    InvalidConfig(String),
    #[error("empty input stream")]
    EmptyStream,
    #[error("estimate file: {0}")]
    Format(String),
}

impl From<FormatError> for MkfError {
    fn from(e: FormatError) -> Self {
        MkfError::Format(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateEstimate {
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
    pub ax: f64,
    pub ay: f64,
}

impl StateEstimate {
    pub fn new(vx: f64, vy: f64, yaw_rate: f64, ax: f64, ay: f64) -> Self {
        Self {
            vx,
            vy,
            yaw_rate,
            ax,
            ay,
        }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.vx, self.vy, self.yaw_rate, self.ax, self.ay]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4])
    }

    pub fn to_vector(self) -> Vector5 {
        Vector5::from(self.to_array())
    }

    pub fn from_vector(v: &Vector5) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub mean: StateEstimate,
    pub covariance: Matrix5,
    /// (bax, bay) per IMU.
    pub accel_bias: [[f64; 2]; 2],
    pub gyro_bias: [f64; 2],
    pub time: f64,
}

impl FilterState {
    pub fn new(mean: StateEstimate, covariance: Matrix5) -> Self {
        Self {
            mean,
            covariance,
            accel_bias: [[0.0; 2]; 2],
            gyro_bias: [0.0; 2],
            time: 0.0,
        }
    }

    pub fn with_calibration(mut self, cal: &ImuCalibration) -> Self {
        self.accel_bias = cal.accel_bias;
        self.gyro_bias = cal.gyro_bias;
        self
    }
}

/// Symmetrizes `p` and confirms it is positive semi-definite. Cholesky is tried first;
/// a zero-variance direction (e.g. a pinned state) is accepted via the eigenvalues.
pub(crate) fn checked_covariance(p: &Matrix5, time: f64) -> Result<Matrix5, MkfError> {
    let p = (p + p.transpose()) * 0.5;
    if p.iter().any(|x| !x.is_finite()) {
        return Err(MkfError::CovarianceNotPD { time });
    }
    if p.cholesky().is_some() {
        return Ok(p);
    }
    let scale = p.diagonal().amax().max(1e-300);
    let min_eig = p.symmetric_eigenvalues().min();
    if min_eig >= -1e-12 * scale {
        Ok(p)
    } else {
        Err(MkfError::CovarianceNotPD { time })
    }
}
