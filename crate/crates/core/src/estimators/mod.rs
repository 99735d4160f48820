//! Moving horizon estimation, extended Kalman filtering and RTS smoothing.

pub mod ekf;
pub mod mhe;
pub mod rts;

pub use ekf::{ekf_hold, ekf_seed, ekf_step, kalman_update, EkfConfig, FilterState, StepKind};
pub use mhe::{mhe_solve, MheConfig, MheSolution, MheWindow};
pub use rts::{rts_smooth, SmootherState};
