use crate::dynamics::ProcessModel;
use crate::error::{Error, Result};
use crate::estimators::ekf::FilterState;
use crate::state::{Mat8, StateVector};

#[derive(Debug, Clone, PartialEq)]
pub struct SmootherState {
    pub gain: Mat8,
    pub x_smooth: StateVector,
    pub p_smooth: Mat8,
}

/// Backward RTS pass over one contiguous forward segment.
///
/// `transitions[k]` is the process model that propagated `forward[k]` to
/// `forward[k + 1]`, so it must hold exactly `forward.len() - 1` models.
pub fn rts_smooth(forward: &[FilterState], transitions: &[ProcessModel]) -> Result<Vec<SmootherState>> {
    let n = forward.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if transitions.len() + 1 != n {
        return Err(Error::Invariant(format!(
            "RTS needs {} transitions for {n} states, got {}",
            n - 1,
            transitions.len()
        )));
    }
    let last = &forward[n - 1];
    if !last.valid {
        return Err(Error::Invariant("RTS segment ends in an invalid state".into()));
    }
    let mut out = vec![
        SmootherState { gain: Mat8::zeros(), x_smooth: last.x_post, p_smooth: last.p_post };
        n
    ];
    for k in (0..n - 1).rev() {
        let cur = &forward[k];
        let next = &forward[k + 1];
        let p_prior_inv = next
            .p_prior
            .try_inverse()
            .ok_or_else(|| Error::Numerical(format!("singular prior covariance at segment index {}", k + 1)))?;
        let gain = cur.p_post * transitions[k].a.transpose() * p_prior_inv;
        let x = cur.x_post.0 + gain * (out[k + 1].x_smooth.0 - next.x_prior.0);
        let p = cur.p_post + gain * (out[k + 1].p_smooth - next.p_prior) * gain.transpose();
        out[k] = SmootherState { gain, x_smooth: StateVector(x), p_smooth: (p + p.transpose()) * 0.5 };
    }
    Ok(out)
}
