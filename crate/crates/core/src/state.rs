use nalgebra::{SMatrix, SVector, Vector3};

pub type Mat8 = SMatrix<f64, 8, 8>;
pub type Vec8 = SVector<f64, 8>;

/// Receiver state `[x, vx, y, vy, z, vz, clock_offset, clock_drift]`.
///
/// Positions and the clock offset are in meters, velocities and the clock
/// drift in m/s (range-equivalent clock terms).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateVector(pub Vec8);

impl StateVector {
    pub const X: usize = 0;
    pub const VX: usize = 1;
    pub const Y: usize = 2;
    pub const VY: usize = 3;
    pub const Z: usize = 4;
    pub const VZ: usize = 5;
    pub const CLOCK: usize = 6;
    pub const DRIFT: usize = 7;

    pub fn zeros() -> Self {
        Self(Vec8::zeros())
    }

    pub fn new(position: Vector3<f64>, velocity: Vector3<f64>, clock: f64, drift: f64) -> Self {
        Self(Vec8::from_column_slice(&[
            position.x, velocity.x, position.y, velocity.y, position.z, velocity.z, clock, drift,
        ]))
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.0[Self::X], self.0[Self::Y], self.0[Self::Z])
    }

    pub fn velocity(&self) -> Vector3<f64> {
        Vector3::new(self.0[Self::VX], self.0[Self::VY], self.0[Self::VZ])
    }

    pub fn clock_offset(&self) -> f64 {
        self.0[Self::CLOCK]
    }

    pub fn clock_drift(&self) -> f64 {
        self.0[Self::DRIFT]
    }

    pub fn set_position(&mut self, p: Vector3<f64>) {
        self.0[Self::X] = p.x;
        self.0[Self::Y] = p.y;
        self.0[Self::Z] = p.z;
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Finite, with every position axis inside +/-5e7 m.
    pub fn is_plausible(&self) -> bool {
        self.is_finite() && self.position().iter().all(|c| c.abs() <= 5.0e7)
    }
}

impl From<Vec8> for StateVector {
    fn from(v: Vec8) -> Self {
        Self(v)
    }
}

/// Largest symmetric-part eigenvalue deficit: returns the minimum eigenvalue
/// of `(m + m^T) / 2`.
#[cfg(test)]
pub(crate) fn min_eigenvalue(m: &Mat8) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen().eigenvalues.min()
}
