//! Positioning with noisy Android raw GNSS measurements.
//!
//! The crate turns GnssLogger `Raw` records into corrected pseudorange and
//! pseudorange-rate observations, solves position/velocity/time per epoch with
//! weighted least squares, and suppresses noise with moving horizon
//! estimation, an extended Kalman filter and a Rauch-Tung-Striebel smoother.
//! Each estimator is driven by a small state machine that handles gaps,
//! pseudorange jumps and satellite outages.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod fsm;
pub mod geodesy;
pub mod ingest;
pub mod measurements;
pub mod output;
pub mod pipeline;
pub mod rawmeas;
pub mod sim;
pub mod state;
pub mod wls;

pub use error::{Error, Result};
pub use state::{Mat8, StateVector};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
