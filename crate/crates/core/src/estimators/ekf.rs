use nalgebra::{DMatrix, DVector};

use crate::dynamics::{measurement_covariance, ProcessModel};
use crate::error::{Error, Result};
use crate::measurements::EpochBatch;
use crate::state::{Mat8, StateVector, Vec8};
use crate::wls::linearize;

/// How a filter state was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    /// Initialized from a WLS solution; not propagated from the previous epoch.
    Seed,
    /// Predicted and updated with measurements.
    Update,
    /// Predicted only.
    Hold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub x_prior: StateVector,
    pub p_prior: Mat8,
    pub x_post: StateVector,
    pub p_post: Mat8,
    pub epoch_index: usize,
    pub valid: bool,
    pub kind: StepKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfConfig {
    /// Drop rows whose normalized squared innovation exceeds this value.
    pub innovation_gate: Option<f64>,
    /// Initial covariance diagonal used by [`ekf_seed`].
    pub initial_sigma_position: f64,
    pub initial_sigma_velocity: f64,
    pub initial_sigma_clock: f64,
    pub initial_sigma_drift: f64,
}

impl Default for EkfConfig {
    fn default() -> Self {
        Self {
            innovation_gate: None,
            initial_sigma_position: 100.0,
            initial_sigma_velocity: 10.0,
            initial_sigma_clock: 1000.0,
            initial_sigma_drift: 100.0,
        }
    }
}

impl EkfConfig {
    pub fn initial_covariance(&self) -> Mat8 {
        let (p, v) = (self.initial_sigma_position.powi(2), self.initial_sigma_velocity.powi(2));
        Mat8::from_diagonal(&Vec8::from_column_slice(&[
            p,
            v,
            p,
            v,
            p,
            v,
            self.initial_sigma_clock.powi(2),
            self.initial_sigma_drift.powi(2),
        ]))
    }
}

fn to_dmatrix(m: &Mat8) -> DMatrix<f64> {
    DMatrix::from_column_slice(8, 8, m.as_slice())
}

fn to_mat8(m: &DMatrix<f64>) -> Mat8 {
    Mat8::from_column_slice(m.as_slice())
}

/// Linear Kalman measurement update with innovation `b`.
///
/// Returns the posterior state, the symmetrized posterior covariance and the gain.
pub fn kalman_update(
    x_prior: &DVector<f64>,
    p_prior: &DMatrix<f64>,
    c: &DMatrix<f64>,
    b: &DVector<f64>,
    r: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let pct = p_prior * c.transpose();
    let s = c * &pct + r;
    let s_inv = s
        .cholesky()
        .ok_or_else(|| Error::Numerical("innovation covariance not positive definite".into()))?
        .inverse();
    let k = pct * s_inv;
    let x = x_prior + &k * b;
    let n = p_prior.nrows();
    let p = (DMatrix::identity(n, n) - &k * c) * p_prior;
    let p = (&p + p.transpose()) * 0.5;
    if x.iter().chain(p.iter()).any(|v| !v.is_finite()) {
        return Err(Error::FilterDiverged);
    }
    Ok((x, p, k))
}

/// Starts a filter from a WLS state.
pub fn ekf_seed(state: StateVector, covariance: Mat8, epoch_index: usize) -> FilterState {
    FilterState {
        x_prior: state,
        p_prior: covariance,
        x_post: state,
        p_post: covariance,
        epoch_index,
        valid: true,
        kind: StepKind::Seed,
    }
}

fn predict(prev: &FilterState, model: &ProcessModel) -> Result<(StateVector, Mat8)> {
    if !prev.valid {
        return Err(Error::Invariant("EKF step from an invalid state".into()));
    }
    let x = StateVector(model.a * prev.x_post.0);
    let p = model.a * prev.p_post * model.a.transpose() + model.q;
    let p = (p + p.transpose()) * 0.5;
    if !x.is_finite() || p.iter().any(|v| !v.is_finite()) {
        return Err(Error::FilterDiverged);
    }
    Ok((x, p))
}

/// Propagates without a measurement update.
pub fn ekf_hold(prev: &FilterState, model: &ProcessModel) -> Result<FilterState> {
    let (x, p) = predict(prev, model)?;
    Ok(FilterState {
        x_prior: x,
        p_prior: p,
        x_post: x,
        p_post: p,
        epoch_index: prev.epoch_index + 1,
        valid: true,
        kind: StepKind::Hold,
    })
}

/// One predict/update cycle, linearizing at the prior.
pub fn ekf_step(prev: &FilterState, model: &ProcessModel, epoch: &EpochBatch, cfg: &EkfConfig) -> Result<FilterState> {
    let (x_prior, p_prior) = predict(prev, model)?;
    if epoch.is_empty() {
        return Err(Error::InsufficientSatellites { have: 0, need: 1 });
    }
    let sys = linearize(&x_prior, epoch)?;
    let r = measurement_covariance(epoch);
    let p_d = to_dmatrix(&p_prior);

    let keep: Vec<usize> = match cfg.innovation_gate {
        None => (0..sys.rows()).collect(),
        Some(gate) => {
            let s = &sys.g * &p_d * sys.g.transpose() + &r;
            (0..sys.rows()).filter(|&i| sys.b[i] * sys.b[i] / s[(i, i)] <= gate).collect()
        }
    };
    if keep.is_empty() {
        return Ok(FilterState {
            x_prior,
            p_prior,
            x_post: x_prior,
            p_post: p_prior,
            epoch_index: prev.epoch_index + 1,
            valid: true,
            kind: StepKind::Hold,
        });
    }
    let c = sys.g.select_rows(keep.iter());
    let b = sys.b.select_rows(keep.iter());
    let r = r.select_rows(keep.iter()).select_columns(keep.iter());

    let xp = DVector::from_column_slice(x_prior.0.as_slice());
    let (x, p, _) = kalman_update(&xp, &p_d, &c, &b, &r)?;
    Ok(FilterState {
        x_prior,
        p_prior,
        x_post: StateVector(Vec8::from_column_slice(x.as_slice())),
        p_post: to_mat8(&p),
        epoch_index: prev.epoch_index + 1,
        valid: true,
        kind: StepKind::Update,
    })
}
