//! Velocity estimation for ground vehicles from proprioceptive sensors.
//!
//! Two estimators are provided and compared against a reference built with an external
//! velocity sensor:
//!
//! * [`mkf`]: a mixed Kalman filter (EKF propagation, linear IMU updates, unscented
//!   update of the combined wheel-velocity measurement).
//! * [`gru_net`]: an end-to-end stacked-GRU network trained with BPTT and Adam.
//!
//! [`vehicle_sim`] produces labelled multi-rate data, [`data_pipeline`] turns it into
//! synchronized 200 Hz datasets with smoothed targets, and [`eval`] holds metrics and the
//! case-study runner.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod io;
pub mod vehicle_sim;
pub mod data_pipeline;
pub mod mkf;
pub mod gru_net;
pub mod eval;
