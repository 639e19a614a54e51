//! Planar two-track model with per-wheel magic-formula forces and wheel spin dynamics.

use super::params::{is_front, VehicleParams};
use super::SimError;

/// Below this speed the slip denominators are held constant so the model stays
/// well-posed at standstill.
pub const SLIP_SPEED_FLOOR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GroundTruthState {
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
    /// Body-frame acceleration during the step that produced this state.
    pub ax: f64,
    pub ay: f64,
    pub wheel_omega: [f64; 4],
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub time: f64,
}

impl GroundTruthState {
    pub fn is_finite(&self) -> bool {
        [
            self.vx,
            self.vy,
            self.yaw_rate,
            self.ax,
            self.ay,
            self.x,
            self.y,
            self.heading,
            self.time,
        ]
        .iter()
        .chain(self.wheel_omega.iter())
        .all(|v| v.is_finite())
    }

    /// Straight-line rolling at `speed` with every wheel at zero slip.
    pub fn rolling(speed: f64, params: &VehicleParams) -> Self {
        let mut s = Self {
            vx: speed,
            ..Default::default()
        };
        for i in 0..4 {
            s.wheel_omega[i] = speed / params.wheel_radius[i];
        }
        s
    }

    /// Chassis plus wheel-spin kinetic energy, J.
    pub fn kinetic_energy(&self, params: &VehicleParams) -> f64 {
        0.5 * params.mass * (self.vx * self.vx + self.vy * self.vy)
            + 0.5 * params.yaw_inertia * self.yaw_rate * self.yaw_rate
            + 0.5
                * params.wheel_inertia
                * self.wheel_omega.iter().map(|w| w * w).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Controls {
    /// Front road-wheel angle, rad.
    pub steering: f64,
    /// N·m, positive drives forward.
    pub wheel_torques: [f64; 4],
}

impl Controls {
    pub fn clamped(&self, params: &VehicleParams) -> Self {
        let mut c = *self;
        c.steering = c.steering.clamp(-params.max_steering, params.max_steering);
        for t in &mut c.wheel_torques {
            *t = t.clamp(-params.max_wheel_torque, params.max_wheel_torque);
        }
        c
    }
}

/// Contact-point kinematics of one wheel in its own frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelKinematics {
    pub steer: f64,
    /// Contact velocity along the wheel heading, m/s.
    pub v_long: f64,
    /// Contact velocity across the wheel heading, m/s.
    pub v_lat: f64,
    pub slip_ratio: f64,
    /// Positive when the contact patch slides to the wheel's left.
    pub slip_angle: f64,
}

pub fn wheel_kinematics(
    state: &GroundTruthState,
    steering: f64,
    params: &VehicleParams,
    wheel: usize,
) -> WheelKinematics {
    let [px, py] = params.wheel_positions[wheel];
    let steer = if is_front(wheel) { steering } else { 0.0 };
    let vcx = state.vx - state.yaw_rate * py;
    let vcy = state.vy + state.yaw_rate * px;
    let (s, c) = steer.sin_cos();
    let v_long = c * vcx + s * vcy;
    let v_lat = -s * vcx + c * vcy;
    let den = v_long.abs().max(SLIP_SPEED_FLOOR);
    WheelKinematics {
        steer,
        v_long,
        v_lat,
        slip_ratio: (state.wheel_omega[wheel] * params.wheel_radius[wheel] - v_long) / den,
        slip_angle: (v_lat / den).atan(),
    }
}

/// Sideslip angle of the rear-axle midpoint, rad.
pub fn rear_axle_sideslip(state: &GroundTruthState, params: &VehicleParams) -> f64 {
    let vy_rear = state.vy - state.yaw_rate * params.rear_axle();
    vy_rear.atan2(state.vx.max(1e-6))
}

struct Forces {
    fx: f64,
    fy: f64,
    mz: f64,
    /// Tire longitudinal force and its slope with respect to wheel speed, per wheel.
    wheel_fx: [f64; 4],
    wheel_dfx_domega: [f64; 4],
}

fn tire_forces(state: &GroundTruthState, steering: f64, params: &VehicleParams) -> Forces {
    let loads = params.normal_loads();
    let mut f = Forces {
        fx: 0.0,
        fy: 0.0,
        mz: 0.0,
        wheel_fx: [0.0; 4],
        wheel_dfx_domega: [0.0; 4],
    };
    for i in 0..4 {
        let k = wheel_kinematics(state, steering, params, i);
        let den = k.v_long.abs().max(SLIP_SPEED_FLOOR);
        let fx_w = loads[i] * params.tire_long.eval(k.slip_ratio);
        let fy_w = -loads[i] * params.tire_lat.eval(k.slip_angle);
        f.wheel_fx[i] = fx_w;
        f.wheel_dfx_domega[i] =
            loads[i] * params.tire_long.slope(k.slip_ratio) * params.wheel_radius[i] / den;
        let (s, c) = k.steer.sin_cos();
        let bx = c * fx_w - s * fy_w;
        let by = s * fx_w + c * fy_w;
        let [px, py] = params.wheel_positions[i];
        f.fx += bx;
        f.fy += by;
        f.mz += px * by - py * bx;
    }
    f
}

/// One semi-implicit Euler step. Wheel spin uses a linearised implicit update because the
/// slip dynamics are stiff at low speed; the body-frame velocity is rotated exactly by the
/// yaw increment so the integrator does not inject kinetic energy.
pub fn step_dynamics(
    state: &GroundTruthState,
    controls: &Controls,
    params: &VehicleParams,
    dt: f64,
) -> Result<GroundTruthState, SimError> {
    if !(dt > 0.0 && dt <= 0.01) {
        return Err(SimError::InvalidStep(dt));
    }
    let f = tire_forces(state, controls.steering, params);
    let ax = f.fx / params.mass;
    let ay = f.fy / params.mass;

    let mut next = *state;
    next.ax = ax;
    next.ay = ay;
    next.yaw_rate = state.yaw_rate + dt * f.mz / params.yaw_inertia;
    let (s, c) = (next.yaw_rate * dt).sin_cos();
    next.vx = c * state.vx + s * state.vy + dt * ax;
    next.vy = -s * state.vx + c * state.vy + dt * ay;
    for i in 0..4 {
        let r = params.wheel_radius[i];
        let net = controls.wheel_torques[i] - r * f.wheel_fx[i];
        let damping = dt * r * f.wheel_dfx_domega[i];
        next.wheel_omega[i] = state.wheel_omega[i] + dt * net / (params.wheel_inertia + damping);
    }
    next.heading = state.heading + dt * next.yaw_rate;
    let (sh, ch) = next.heading.sin_cos();
    next.x = state.x + dt * (ch * next.vx - sh * next.vy);
    next.y = state.y + dt * (sh * next.vx + ch * next.vy);
    next.time = state.time + dt;

    if !next.is_finite() {
        return Err(SimError::NonFinite { time: state.time });
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(mut s: GroundTruthState, c: Controls, p: &VehicleParams, steps: usize) -> GroundTruthState {
        for _ in 0..steps {
            s = step_dynamics(&s, &c, p, 1e-3).unwrap();
        }
        s
    }

    #[test]
    fn rolling_equilibrium_only_moves_position() {
        let p = VehicleParams::default();
        let s0 = GroundTruthState::rolling(10.0, &p);
        let s = run(s0, Controls::default(), &p, 1000);
        assert!((s.vx - 10.0).abs() < 1e-12);
        assert!(s.vy.abs() < 1e-12 && s.yaw_rate.abs() < 1e-12);
        for i in 0..4 {
            assert!((s.wheel_omega[i] - 50.0).abs() < 1e-12);
        }
        assert!((s.x - 10.0).abs() < 1e-9);
    }

    #[test]
    fn standstill_stays_put() {
        let p = VehicleParams::default();
        let s = run(GroundTruthState::default(), Controls::default(), &p, 2000);
        assert_eq!((s.vx, s.vy, s.yaw_rate, s.x, s.y), (0.0, 0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn rejects_bad_step() {
        let p = VehicleParams::default();
        let s = GroundTruthState::default();
        assert!(matches!(
            step_dynamics(&s, &Controls::default(), &p, 0.0),
            Err(SimError::InvalidStep(_))
        ));
        assert!(step_dynamics(&s, &Controls::default(), &p, 0.02).is_err());
    }

    #[test]
    fn diverging_params_report_non_finite() {
        let mut p = VehicleParams::default();
        p.wheel_inertia = 1e-300;
        let c = Controls {
            steering: 0.0,
            wheel_torques: [1e300; 4],
        };
        let mut s = GroundTruthState::rolling(5.0, &p);
        let mut saw_err = false;
        for _ in 0..10 {
            match step_dynamics(&s, &c, &p, 1e-3) {
                Ok(n) => s = n,
                Err(SimError::NonFinite { .. }) => {
                    saw_err = true;
                    break;
                }
                Err(e) => panic!("{e}"),
            }
        }
        assert!(saw_err);
    }

    #[test]
    fn steady_arc_matches_kinematic_bicycle() {
        let p = VehicleParams::default();
        let delta = 0.05;
        let mut s = GroundTruthState::rolling(5.0, &p);
        for _ in 0..8000 {
            // Hold speed so the arc reaches steady state.
            let push = 40.0 * (5.0 - s.vx);
            let c = Controls {
                steering: delta,
                wheel_torques: [push; 4],
            };
            s = step_dynamics(&s, &c, &p, 1e-3).unwrap();
        }
        let kinematic = s.vx * delta.tan() / p.wheelbase();
        let rel = (s.yaw_rate - kinematic).abs() / kinematic;
        assert!(rel < 0.05, "yaw {} vs kinematic {kinematic}", s.yaw_rate);
    }

    #[test]
    fn coasting_never_gains_energy() {
        let p = VehicleParams::default();
        let mut s = GroundTruthState::rolling(15.0, &p);
        s.vy = 1.5;
        s.yaw_rate = 0.8;
        s.wheel_omega = [70.0, 80.0, 60.0, 90.0];
        let c = Controls {
            steering: 0.2,
            wheel_torques: [0.0; 4],
        };
        let mut e = s.kinetic_energy(&p);
        for _ in 0..5000 {
            s = step_dynamics(&s, &c, &p, 1e-3).unwrap();
            let e_next = s.kinetic_energy(&p);
            assert!(e_next <= e * (1.0 + 1e-12), "{e_next} > {e}");
            e = e_next;
        }
    }
}
