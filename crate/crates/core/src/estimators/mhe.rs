use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::dynamics::transition_inverse;
use crate::error::{Error, Result};
use crate::measurements::EpochBatch;
use crate::state::{Mat8, StateVector, Vec8};
use crate::wls::{checked_pinv, linearize};

/// Sliding window of the most recent continuous epochs, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct MheWindow {
    capacity: usize,
    epochs: VecDeque<EpochBatch>,
}

impl MheWindow {
    /// `capacity` is the window size N+1.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "MHE window must hold at least one epoch");
        Self { capacity, epochs: VecDeque::with_capacity(capacity) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn push(&mut self, epoch: EpochBatch) {
        if self.epochs.len() == self.capacity {
            self.epochs.pop_front();
        }
        self.epochs.push_back(epoch);
    }

    pub fn clear(&mut self) {
        self.epochs.clear();
    }

    pub fn epochs(&self) -> impl Iterator<Item = &EpochBatch> {
        self.epochs.iter()
    }

    pub fn newest(&self) -> Option<&EpochBatch> {
        self.epochs.back()
    }

    pub fn total_rows(&self) -> usize {
        self.epochs.iter().map(|e| 2 * e.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MheConfig {
    /// Apply each epoch's reciprocal-sigma weights to its rows.
    pub weighted: bool,
    pub tolerance_m: f64,
    pub max_iterations: usize,
}

impl Default for MheConfig {
    fn default() -> Self {
        Self { weighted: true, tolerance_m: 1e-4, max_iterations: 20 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MheSolution {
    pub state: StateVector,
    pub iterations: usize,
}

/// Back-propagation matrices mapping the newest state to each window epoch,
/// newest first.
fn back_propagators(window: &MheWindow) -> Result<Vec<Mat8>> {
    let epochs: Vec<&EpochBatch> = window.epochs.iter().collect();
    let mut out = Vec::with_capacity(epochs.len());
    let mut acc = Mat8::identity();
    out.push(acc);
    for j in (0..epochs.len().saturating_sub(1)).rev() {
        // transition from epoch j to j+1 uses the later epoch's period
        let period = epochs[j + 1].sample_period.filter(|t| *t > 0.0).ok_or_else(|| {
            Error::Domain("MHE window epoch lacks a positive sample period".into())
        })?;
        acc = transition_inverse(period) * acc;
        out.push(acc);
    }
    Ok(out)
}

/// Batch least squares over the window for the newest epoch's state,
/// ignoring process noise.
pub fn mhe_solve(window: &MheWindow, init: &StateVector, cfg: &MheConfig) -> Result<MheSolution> {
    let rows = window.total_rows();
    if rows < 8 {
        return Err(Error::InsufficientSatellites { have: rows / 2, need: 4 });
    }
    let props = back_propagators(window)?;
    let mut x = *init;
    for iteration in 1..=cfg.max_iterations {
        let mut m_stack = DMatrix::zeros(rows, 8);
        let mut y = nalgebra::DVector::zeros(rows);
        let mut row = 0;
        for (epoch, prop) in window.epochs.iter().rev().zip(&props) {
            let approx = StateVector(prop * x.0);
            let sys = linearize(&approx, epoch)?;
            let c = &sys.g * DMatrix::from_column_slice(8, 8, prop.as_slice());
            for i in 0..sys.rows() {
                let w = if cfg.weighted { sys.w[i] } else { 1.0 };
                m_stack.row_mut(row + i).copy_from(&(c.row(i) * w));
                y[row + i] = sys.b[i] * w;
            }
            row += sys.rows();
        }
        let dx = checked_pinv(&m_stack)? * y;
        x = StateVector(x.0 + Vec8::from_iterator(dx.iter().copied()));
        if !x.is_finite() {
            return Err(Error::Divergence);
        }
        let step = (dx[StateVector::X].powi(2) + dx[StateVector::Y].powi(2) + dx[StateVector::Z].powi(2)).sqrt();
        if step < cfg.tolerance_m {
            return Ok(MheSolution { state: x, iterations: iteration });
        }
    }
    Err(Error::Divergence)
}
