//! Ground-truth vehicle simulator and sensor synthesizer.

mod dynamics;
mod params;
mod scenario;
mod sensors;
mod tire;

pub use dynamics::{
    rear_axle_sideslip, step_dynamics, wheel_kinematics, Controls, GroundTruthState,
    WheelKinematics, SLIP_SPEED_FLOOR,
};
pub use params::{is_front, VehicleParams, GRAVITY, WHEEL_NAMES};
pub use scenario::{
    parse_freeze_events, run_scenario, simulate, AchievedConditions, ScenarioConfig,
    ScenarioKind, ScenarioOutput, SurfaceClass, HIGH_SLIP_MIN_SIDESLIP, LAUNCH_MIN_SLIP,
    SIM_DT, STANDSTILL_PREFIX,
};
pub use sensors::{
    synthesize_sensors, ChannelGroup, FreezeEvent, ImuBias, NoiseSigmas, RawSensorStream,
    SensorFaultPlan, SensorId, Trajectory, IMU1_RATE_HZ, IMU2_RATE_HZ, STEERING_RATE_HZ,
    TRUTH_RATE_HZ, VELOCITY_RATE_HZ, WHEELS_RATE_HZ,
};
pub use tire::{magic_formula, magic_formula_slope, slip_ratio_from_torque, TireCoefficients};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("integration produced non-finite state at t = {time} s")]
    NonFinite { time: f64 },
    #[error("step size {0} s outside (0, 0.01]")]
    InvalidStep(f64),
    #[error("invalid vehicle parameters: {0}")]
    InvalidParams(String),
    #[error("scenario duration {0} s is too short")]
    InvalidDuration(f64),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("scenario `{scenario}` did not reach its target condition: {detail}")]
    ScenarioUnreachable { scenario: String, detail: String },
}
