//! Per-epoch iterative weighted least squares for position, velocity and
//! clock terms, solving pseudoranges and rates jointly.

use nalgebra::{DMatrix, DVector, SMatrix};

use crate::error::{Error, Result};
use crate::measurements::EpochBatch;
use crate::state::{Mat8, StateVector, Vec8};

/// Relative singular-value threshold below which a direction counts as unobservable.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Linearized joint pseudorange/rate system. Rows alternate pseudorange and
/// rate for each satellite.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedSystem {
    pub g: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Diagonal of the weight matrix (reciprocal 1-sigma uncertainties).
    pub w: DVector<f64>,
}

impl LinearizedSystem {
    pub fn rows(&self) -> usize {
        self.b.len()
    }

    /// `W G` with `W` applied row-wise.
    pub fn weighted_g(&self) -> DMatrix<f64> {
        let mut wg = self.g.clone();
        for (i, mut row) in wg.row_iter_mut().enumerate() {
            row *= self.w[i];
        }
        wg
    }

    pub fn weighted_b(&self) -> DVector<f64> {
        self.b.component_mul(&self.w)
    }
}

pub fn linearize(approx: &StateVector, epoch: &EpochBatch) -> Result<LinearizedSystem> {
    let m = epoch.len();
    if m == 0 {
        return Err(Error::InsufficientSatellites { have: 0, need: 1 });
    }
    if !approx.is_finite() {
        return Err(Error::Numerical("non-finite linearization point".into()));
    }
    let pos = approx.position();
    let vel = approx.velocity();
    let mut g = DMatrix::zeros(2 * m, 8);
    let mut b = DVector::zeros(2 * m);
    let mut w = DVector::zeros(2 * m);
    for (n, meas) in epoch.measurements.iter().enumerate() {
        let los = pos - meas.sat_pos;
        let r = los.norm();
        if r == 0.0 {
            return Err(Error::DegenerateGeometry);
        }
        let unit = los / r;
        let (pr, rr) = (2 * n, 2 * n + 1);
        for axis in 0..3 {
            g[(pr, 2 * axis)] = unit[axis];
            g[(rr, 2 * axis + 1)] = unit[axis];
        }
        g[(pr, StateVector::CLOCK)] = 1.0;
        g[(rr, StateVector::DRIFT)] = 1.0;
        b[pr] = meas.rho_c - r - approx.clock_offset();
        b[rr] = meas.rho_dot_c - (vel - meas.sat_vel).dot(&unit) - approx.clock_drift();
        w[pr] = 1.0 / meas.sigma_rho;
        w[rr] = 1.0 / meas.sigma_rho_dot;
    }
    Ok(LinearizedSystem { g, b, w })
}

/// Moore-Penrose pseudoinverse that refuses rank-deficient input.
pub fn checked_pinv(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let cols = a.ncols();
    if a.nrows() < cols {
        return Err(Error::SingularGeometry { rank: a.nrows(), cols });
    }
    let svd = a.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    if !max_sv.is_finite() {
        return Err(Error::Numerical("non-finite matrix".into()));
    }
    let rank = svd.singular_values.iter().filter(|&&s| s > RANK_TOLERANCE * max_sv).count();
    if rank < cols {
        return Err(Error::SingularGeometry { rank, cols });
    }
    svd.pseudo_inverse(RANK_TOLERANCE * max_sv).map_err(|e| Error::Numerical(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WlsConfig {
    /// Stop once the position update is below this norm, m.
    pub tolerance_m: f64,
    pub max_iterations: usize,
}

impl Default for WlsConfig {
    fn default() -> Self {
        Self { tolerance_m: 1e-4, max_iterations: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WlsDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// `||W b||` at the final linearization point.
    pub weighted_residual_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WlsSolution {
    pub state: StateVector,
    pub covariance: Mat8,
    pub diagnostics: WlsDiagnostics,
}

pub fn wls_solve(epoch: &EpochBatch, init: &StateVector, cfg: &WlsConfig) -> Result<WlsSolution> {
    if epoch.len() < 4 {
        return Err(Error::InsufficientSatellites { have: epoch.len(), need: 4 });
    }
    let mut x = *init;
    let mut last_step = f64::INFINITY;
    let mut growth = 0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let sys = linearize(&x, epoch)?;
        let dx = checked_pinv(&sys.weighted_g())? * sys.weighted_b();
        x = StateVector(x.0 + Vec8::from_iterator(dx.iter().copied()));
        if !x.is_finite() {
            return Err(Error::Divergence);
        }
        let step = (dx[StateVector::X].powi(2) + dx[StateVector::Y].powi(2) + dx[StateVector::Z].powi(2)).sqrt();
        if step < cfg.tolerance_m {
            converged = true;
            break;
        }
        if step > last_step {
            growth += 1;
            if growth >= 3 {
                return Err(Error::Divergence);
            }
        } else {
            growth = 0;
        }
        last_step = step;
    }
    let sys = linearize(&x, epoch)?;
    let wg = sys.weighted_g();
    let normal: SMatrix<f64, 8, 8> = SMatrix::from_iterator((wg.transpose() * &wg).iter().copied());
    let covariance = normal
        .try_inverse()
        .ok_or_else(|| Error::SingularGeometry { rank: 7, cols: 8 })?;
    Ok(WlsSolution {
        state: x,
        covariance: (covariance + covariance.transpose()) * 0.5,
        diagnostics: WlsDiagnostics {
            iterations,
            converged,
            weighted_residual_norm: sys.weighted_b().norm(),
        },
    })
}

/// Geometric dilution of precision of the pseudorange rows at `state`.
pub fn gdop(state: &StateVector, epoch: &EpochBatch) -> Result<f64> {
    let sys = linearize(state, epoch)?;
    let m = epoch.len();
    let mut h = DMatrix::zeros(m, 4);
    for n in 0..m {
        for (j, col) in [StateVector::X, StateVector::Y, StateVector::Z, StateVector::CLOCK].iter().enumerate() {
            h[(n, j)] = sys.g[(2 * n, *col)];
        }
    }
    let inv = (h.transpose() * &h)
        .try_inverse()
        .ok_or(Error::SingularGeometry { rank: 3, cols: 4 })?;
    Ok(inv.trace().sqrt())
}
