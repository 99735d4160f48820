//! Process model (constant-velocity motion plus two-state clock) and the
//! measurement noise model.

use nalgebra::{DMatrix, SMatrix};

use crate::error::{Error, Result};
use crate::measurements::EpochBatch;
use crate::state::{Mat8, StateVector};

type Mat2 = SMatrix<f64, 2, 2>;

/// Per-axis acceleration and clock noise intensities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralDensities {
    /// (m/s^2)^2 per axis.
    pub s_vx: f64,
    pub s_vy: f64,
    pub s_vz: f64,
    /// Clock offset noise, m^2/s.
    pub s_t: f64,
    /// Clock drift noise, (m/s)^2/s.
    pub s_f: f64,
}

impl SpectralDensities {
    pub fn check(&self) -> Result<()> {
        let all = [self.s_vx, self.s_vy, self.s_vz, self.s_t, self.s_f];
        if all.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Domain(format!("negative spectral density in {self:?}")));
        }
        Ok(())
    }
}

/// Lower bounds applied to estimated spectral densities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityFloors {
    pub velocity: f64,
    pub clock_offset: f64,
    pub clock_drift: f64,
}

impl Default for DensityFloors {
    fn default() -> Self {
        Self { velocity: 0.01, clock_offset: 1.0, clock_drift: 0.01 }
    }
}

impl DensityFloors {
    pub fn as_densities(&self) -> SpectralDensities {
        SpectralDensities {
            s_vx: self.velocity,
            s_vy: self.velocity,
            s_vz: self.velocity,
            s_t: self.clock_offset,
            s_f: self.clock_drift,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessModel {
    pub sample_period: f64,
    pub a: Mat8,
    pub q: Mat8,
    pub densities: SpectralDensities,
}

impl ProcessModel {
    pub fn new(sample_period: f64, densities: SpectralDensities) -> Result<Self> {
        Ok(Self {
            sample_period,
            a: state_transition(sample_period)?,
            q: process_noise(sample_period, &densities)?,
            densities,
        })
    }

    /// Closed-form `A^-1`.
    pub fn a_inverse(&self) -> Mat8 {
        transition_inverse(self.sample_period)
    }
}

fn block_diag(blocks: [Mat2; 4]) -> Mat8 {
    let mut m = Mat8::zeros();
    for (i, b) in blocks.iter().enumerate() {
        m.fixed_view_mut::<2, 2>(2 * i, 2 * i).copy_from(b);
    }
    m
}

/// Block-diagonal `[[1, T], [0, 1]]` for x, y, z and the clock.
pub fn state_transition(sample_period: f64) -> Result<Mat8> {
    if !(sample_period > 0.0) {
        return Err(Error::Domain(format!("sample period must be positive, got {sample_period}")));
    }
    let blk = Mat2::new(1.0, sample_period, 0.0, 1.0);
    Ok(block_diag([blk; 4]))
}

pub fn transition_inverse(sample_period: f64) -> Mat8 {
    let blk = Mat2::new(1.0, -sample_period, 0.0, 1.0);
    block_diag([blk; 4])
}

pub fn process_noise(sample_period: f64, s: &SpectralDensities) -> Result<Mat8> {
    if !(sample_period > 0.0) {
        return Err(Error::Domain(format!("sample period must be positive, got {sample_period}")));
    }
    s.check()?;
    let t = sample_period;
    let (t2, t3) = (t * t, t * t * t);
    let motion = |sv: f64| Mat2::new(sv * t3 / 3.0, sv * t2 / 2.0, sv * t2 / 2.0, sv * t);
    let clock = Mat2::new(
        s.s_t * t + s.s_f * t3 / 3.0,
        s.s_f * t2 / 2.0,
        s.s_f * t2 / 2.0,
        s.s_f * t,
    );
    Ok(block_diag([motion(s.s_vx), motion(s.s_vy), motion(s.s_vz), clock]))
}

/// Point estimates of the spectral densities from the two most recent
/// posterior states. `period` is the sample period between them.
pub fn estimate_spectral_densities(
    older: &StateVector,
    newer: &StateVector,
    period: f64,
    floors: &DensityFloors,
) -> Result<SpectralDensities> {
    if !(period > 0.0) {
        return Err(Error::Domain(format!("sample period must be positive, got {period}")));
    }
    let accel = |i: usize| ((newer.0[i] - older.0[i]) / period).powi(2);
    let s_t = ((newer.clock_offset() - older.clock_offset()) / period - newer.clock_drift()).powi(2);
    let s_f = ((newer.clock_drift() - older.clock_drift()) / period).powi(2);
    Ok(SpectralDensities {
        s_vx: accel(StateVector::VX).max(floors.velocity),
        s_vy: accel(StateVector::VY).max(floors.velocity),
        s_vz: accel(StateVector::VZ).max(floors.velocity),
        s_t: s_t.max(floors.clock_offset),
        s_f: s_f.max(floors.clock_drift),
    })
}

/// Diagonal `R` in the same row order as the linearized system.
pub fn measurement_covariance(epoch: &EpochBatch) -> DMatrix<f64> {
    let diag = epoch
        .measurements
        .iter()
        .flat_map(|m| [m.sigma_rho * m.sigma_rho, m.sigma_rho_dot * m.sigma_rho_dot]);
    DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(2 * epoch.len(), diag))
}
