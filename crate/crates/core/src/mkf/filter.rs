use nalgebra::{Matrix2, Matrix3, SMatrix, Vector2, Vector3};

use crate::vehicle_sim::is_front;

use super::config::{NoiseConfig, WheelGeometry};
use super::ukf::{sigma_weights, unscented_update};
use super::{
    checked_covariance, FilterState, Matrix5, MkfError, StateEstimate, Vector5, AX, AY, VX, VY,
    YAW_RATE,
};

/// Euler step of v̇ = a + [vy·r, −vx·r], ṙ = 0, ȧ = 0.
pub fn propagate_mean(x: &Vector5, dt: f64) -> Vector5 {
    let (vx, vy, r, ax, ay) = (x[VX], x[VY], x[YAW_RATE], x[AX], x[AY]);
    Vector5::new(vx + dt * (ax + vy * r), vy + dt * (ay - vx * r), r, ax, ay)
}

/// Jacobian of [`propagate_mean`].
pub fn propagation_jacobian(x: &Vector5, dt: f64) -> Matrix5 {
    let (vx, vy, r) = (x[VX], x[VY], x[YAW_RATE]);
    let mut f = Matrix5::identity();
    f[(VX, VY)] = dt * r;
    f[(VX, YAW_RATE)] = dt * vy;
    f[(VX, AX)] = dt;
    f[(VY, VX)] = -dt * r;
    f[(VY, YAW_RATE)] = -dt * vx;
    f[(VY, AY)] = dt;
    f
}

pub fn ekf_propagate(fs: &FilterState, dt: f64, noise: &NoiseConfig) -> Result<FilterState, MkfError> {
    if !(dt > 0.0 && dt <= 0.02) {
        return Err(MkfError::InvalidStep(dt));
    }
    let x = fs.mean.to_vector();
    let f = propagation_jacobian(&x, dt);
    let q = Matrix5::from_diagonal(&Vector5::new(
        noise.q_velocity[0],
        noise.q_velocity[1],
        noise.q_yaw_rate,
        noise.q_accel[0],
        noise.q_accel[1],
    )) * dt;
    let time = fs.time + dt;
    let covariance = checked_covariance(&(f * fs.covariance * f.transpose() + q), time)?;
    let mean = StateEstimate::from_vector(&propagate_mean(&x, dt));
    if !mean.is_finite() {
        return Err(MkfError::CovarianceNotPD { time });
    }
    Ok(FilterState {
        mean,
        covariance,
        time,
        ..fs.clone()
    })
}

/// Linear update of (ax, ay, yaw rate) from one IMU after subtracting its biases.
pub fn lkf_update_imu(
    fs: &FilterState,
    imu: usize,
    accel: [f64; 2],
    gyro: f64,
    noise: &NoiseConfig,
) -> Result<FilterState, MkfError> {
    imu_update(fs, imu, accel, gyro, noise, true)
}

pub(crate) fn imu_update(
    fs: &FilterState,
    imu: usize,
    accel: [f64; 2],
    gyro: f64,
    noise: &NoiseConfig,
    gated: bool,
) -> Result<FilterState, MkfError> {
    if imu > 1 {
        return Err(MkfError::UnknownImu(imu));
    }
    let z = Vector3::new(
        accel[0] - fs.accel_bias[imu][0],
        accel[1] - fs.accel_bias[imu][1],
        gyro - fs.gyro_bias[imu],
    );
    let mut h = SMatrix::<f64, 3, 5>::zeros();
    h[(0, AX)] = 1.0;
    h[(1, AY)] = 1.0;
    h[(2, YAW_RATE)] = 1.0;
    let r = Matrix3::from_diagonal(&Vector3::new(
        noise.r_accel[imu],
        noise.r_accel[imu],
        noise.r_gyro[imu],
    ));
    let x = fs.mean.to_vector();
    let p = &fs.covariance;
    let s = h * p * h.transpose() + r;
    let s_inv = s
        .try_inverse()
        .ok_or(MkfError::CovarianceNotPD { time: fs.time })?;
    let nu = z - h * x;
    if gated {
        let d2 = (nu.transpose() * s_inv * nu)[0];
        let threshold = noise.gate_threshold(3);
        if !(d2 <= threshold) {
            return Err(MkfError::GateRejected {
                distance2: d2,
                threshold,
            });
        }
    }
    let k = p * h.transpose() * s_inv;
    let ikh = Matrix5::identity() - k * h;
    // Joseph form keeps the covariance symmetric PD under round-off.
    let covariance = checked_covariance(&(ikh * p * ikh.transpose() + k * r * k.transpose()), fs.time)?;
    Ok(FilterState {
        mean: StateEstimate::from_vector(&(x + k * nu)),
        covariance,
        ..fs.clone()
    })
}

/// Wheel speeds, drive torques and steering at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelObservation {
    pub omega: [f64; 4],
    pub torque: [f64; 4],
    pub steering: f64,
    pub geometry: WheelGeometry,
}

/// Velocity of wheel `i` in the body frame from its spin and the torque-implied slip.
pub fn wheel_velocity(obs: &WheelObservation, i: usize) -> [f64; 2] {
    let delta = if is_front(i) { obs.steering } else { 0.0 };
    let sr = obs.geometry.slip_ratio(obs.torque[i]);
    let speed = obs.omega[i] * obs.geometry.radius[i] / (sr + 1.0);
    [delta.cos() * speed, delta.sin() * speed]
}

/// Wheel with the smallest torque-implied |slip ratio|; ties go to the lowest index.
pub fn select_min_slip_wheel(obs: &WheelObservation) -> usize {
    let mut best = 0;
    let mut best_sr = f64::INFINITY;
    for i in 0..4 {
        let sr = obs.geometry.slip_ratio(obs.torque[i]).abs();
        if sr < best_sr {
            best = i;
            best_sr = sr;
        }
    }
    best
}

/// Body velocity of the point `p` given the state: v + r × p.
pub fn velocity_at(x: &Vector5, p: [f64; 2]) -> Vector2<f64> {
    Vector2::new(x[VX] - x[YAW_RATE] * p[1], x[VY] + x[YAW_RATE] * p[0])
}

fn point_velocity_update(
    fs: &FilterState,
    z: [f64; 2],
    p: [f64; 2],
    variance: f64,
    noise: &NoiseConfig,
    gated: bool,
) -> Result<FilterState, MkfError> {
    let w = sigma_weights(noise.ukf_alpha, noise.ukf_beta, noise.ukf_kappa);
    let (mean, covariance) = unscented_update(
        &fs.mean.to_vector(),
        &fs.covariance,
        &Vector2::from(z),
        &(Matrix2::identity() * variance),
        |x| velocity_at(x, p),
        &w,
        gated.then(|| noise.gate_threshold(2)),
        fs.time,
    )?;
    Ok(FilterState {
        mean: StateEstimate::from_vector(&mean),
        covariance,
        ..fs.clone()
    })
}

/// Unscented update with the velocity of the minimum-slip wheel.
pub fn ukf_update_velocity(
    fs: &FilterState,
    obs: &WheelObservation,
    noise: &NoiseConfig,
) -> Result<FilterState, MkfError> {
    wheel_update(fs, obs, noise, true)
}

pub(crate) fn wheel_update(
    fs: &FilterState,
    obs: &WheelObservation,
    noise: &NoiseConfig,
    gated: bool,
) -> Result<FilterState, MkfError> {
    let i = select_min_slip_wheel(obs);
    let z = wheel_velocity(obs, i);
    point_velocity_update(fs, z, obs.geometry.positions[i], noise.r_wheel_velocity, noise, gated)
}

/// Unscented update with an external velocity sensor mounted at `offset`.
pub fn ukf_update_external_velocity(
    fs: &FilterState,
    v_meas: [f64; 2],
    offset: [f64; 2],
    noise: &NoiseConfig,
) -> Result<FilterState, MkfError> {
    point_velocity_update(fs, v_meas, offset, noise.r_ext_velocity, noise, true)
}

pub(crate) fn external_update(
    fs: &FilterState,
    v_meas: [f64; 2],
    offset: [f64; 2],
    noise: &NoiseConfig,
    gated: bool,
) -> Result<FilterState, MkfError> {
    point_velocity_update(fs, v_meas, offset, noise.r_ext_velocity, noise, gated)
}
