//! Corrected pseudorange / pseudorange-rate observations.

use std::collections::HashSet;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::ingest::{Constellation, CorrectionKey, DerivedCorrection, DerivedTable, RawEpoch, RawMeasurement};
use crate::rawmeas::{self, TimeScaleConfig};
use crate::SPEED_OF_LIGHT;

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedMeasurement {
    pub constellation: Constellation,
    pub svid: i32,
    /// Corrected pseudorange, m.
    pub rho_c: f64,
    /// Corrected pseudorange rate, m/s.
    pub rho_dot_c: f64,
    pub sigma_rho: f64,
    pub sigma_rho_dot: f64,
    pub sat_pos: Vector3<f64>,
    pub sat_vel: Vector3<f64>,
}

/// All corrected observations of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochBatch {
    pub utc_millis: i64,
    pub measurements: Vec<CorrectedMeasurement>,
    /// Seconds since the previous epoch; `None` for the first epoch of a trace.
    pub sample_period: Option<f64>,
}

impl EpochBatch {
    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    pub fn find(&self, constellation: Constellation, svid: i32) -> Option<&CorrectedMeasurement> {
        self.measurements
            .iter()
            .find(|m| m.constellation == constellation && m.svid == svid)
    }
}

/// Removes satellite clock, atmospheric and inter-signal terms.
pub fn correct(rho: f64, rho_dot: f64, d: &DerivedCorrection) -> (f64, f64) {
    let rho_c = rho + d.sat_clock_bias_m - d.iono_delay_m - d.tropo_delay_m - d.inter_signal_bias_m;
    (rho_c, rho_dot + d.sat_clock_drift_mps)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyFloors {
    pub sigma_rho_m: f64,
    pub sigma_rho_dot_mps: f64,
}

impl Default for UncertaintyFloors {
    fn default() -> Self {
        Self { sigma_rho_m: 0.1, sigma_rho_dot_mps: 0.01 }
    }
}

/// 1-sigma pseudorange (m) and rate (m/s) uncertainties from the raw fields.
///
/// The transmit-time uncertainty is converted from nanoseconds to meters.
pub fn sigma_from_raw(m: &RawMeasurement, floors: &UncertaintyFloors) -> (f64, f64) {
    let sigma_rho = m.received_sv_time_uncertainty_nanos as f64 * 1e-9 * SPEED_OF_LIGHT;
    let sigma_rho_dot = m.pseudorange_rate_uncertainty_mps;
    (
        if sigma_rho > 0.0 { sigma_rho.max(floors.sigma_rho_m) } else { floors.sigma_rho_m },
        if sigma_rho_dot > 0.0 {
            sigma_rho_dot.max(floors.sigma_rho_dot_mps)
        } else {
            floors.sigma_rho_dot_mps
        },
    )
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildConfig {
    pub floors: UncertaintyFloors,
    pub time_scales: TimeScaleConfig,
    /// Empty means every supported constellation.
    pub constellations: Vec<Constellation>,
}

/// Per-epoch bookkeeping of what was dropped and why.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpochDiagnostics {
    pub utc_millis: i64,
    pub missing_correction: usize,
    pub implausible: usize,
    pub unsupported: usize,
    pub duplicates: usize,
    pub excluded_constellation: usize,
}

/// Joins raw epochs with their corrections into corrected batches.
pub fn build_epochs(
    raw: &[RawEpoch],
    derived: &DerivedTable,
    cfg: &BuildConfig,
) -> Result<(Vec<EpochBatch>, Vec<EpochDiagnostics>)> {
    let mut batches = Vec::with_capacity(raw.len());
    let mut diags = Vec::with_capacity(raw.len());
    let mut prev_millis: Option<i64> = None;
    for ep in raw {
        let mut diag = EpochDiagnostics { utc_millis: ep.utc_millis, ..Default::default() };
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(ep.measurements.len());
        for m in &ep.measurements {
            if !cfg.constellations.is_empty() && !cfg.constellations.contains(&m.constellation) {
                diag.excluded_constellation += 1;
                continue;
            }
            let pair = match rawmeas::time_pair(ep, m, &cfg.time_scales) {
                Ok(p) => p,
                Err(Error::UnsupportedConstellation(_)) => {
                    diag.unsupported += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let pr = rawmeas::pseudorange(pair.t_rx, pair.t_tx);
            if !pr.plausible {
                diag.implausible += 1;
                continue;
            }
            let key = CorrectionKey { utc_millis: ep.utc_millis, constellation: m.constellation, svid: m.svid };
            let Some(d) = derived.get(&key) else {
                diag.missing_correction += 1;
                continue;
            };
            if !seen.insert((m.constellation, m.svid)) {
                diag.duplicates += 1;
                continue;
            }
            let (rho_c, rho_dot_c) = correct(pr.meters, m.pseudorange_rate_mps, d);
            let (sigma_rho, sigma_rho_dot) = sigma_from_raw(m, &cfg.floors);
            out.push(CorrectedMeasurement {
                constellation: m.constellation,
                svid: m.svid,
                rho_c,
                rho_dot_c,
                sigma_rho,
                sigma_rho_dot,
                sat_pos: d.sat_pos_ecef,
                sat_vel: d.sat_vel_ecef,
            });
        }
        let sample_period = prev_millis.map(|p| (ep.utc_millis - p) as f64 * 1e-3);
        prev_millis = Some(ep.utc_millis);
        batches.push(EpochBatch { utc_millis: ep.utc_millis, measurements: out, sample_period });
        diags.push(diag);
    }
    Ok((batches, diags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn key() -> CorrectionKey {
        CorrectionKey { utc_millis: 0, constellation: Constellation::Gps, svid: 1 }
    }

    fn raw(unc_ns: i64, rate_unc: f64) -> RawMeasurement {
        RawMeasurement {
            constellation: Constellation::Gps,
            svid: 1,
            time_nanos: 0,
            time_offset_nanos: 0.0,
            full_bias_nanos: -1,
            bias_nanos: 0.0,
            received_sv_time_nanos: 0,
            received_sv_time_uncertainty_nanos: unc_ns,
            pseudorange_rate_mps: 0.0,
            pseudorange_rate_uncertainty_mps: rate_unc,
            state_flags: 0,
            cn0_dbhz: 0.0,
        }
    }

    #[test]
    fn correction_examples() {
        let mut d = DerivedCorrection::zero(key());
        d.sat_clock_bias_m = 1000.0;
        d.iono_delay_m = 5.0;
        d.tropo_delay_m = 10.0;
        let (rc, _) = correct(2.1e7, 0.0, &d);
        assert_eq!(rc, 21_000_985.0);

        let (rc, rdc) = correct(2.1e7, 3.0, &DerivedCorrection::zero(key()));
        assert_eq!((rc, rdc), (2.1e7, 3.0));

        let mut d = DerivedCorrection::zero(key());
        d.sat_clock_drift_mps = -0.5;
        assert_eq!(correct(0.0, 500.0, &d).1, 499.5);
    }

    #[test]
    fn sigma_examples() {
        let floors = UncertaintyFloors::default();
        let (s, _) = sigma_from_raw(&raw(10, 0.5), &floors);
        assert_abs_diff_eq!(s, 2.997_924_58, epsilon = 1e-12);
        let (s, sd) = sigma_from_raw(&raw(0, 0.0), &floors);
        assert_eq!((s, sd), (0.1, 0.01));
        assert_eq!(sigma_from_raw(&raw(10, 0.5), &floors).1, 0.5);
    }

    proptest! {
        #[test]
        fn correction_is_linear(rho in 1.5e7f64..3e7, b1 in -1e5f64..1e5, b2 in -1e5f64..1e5,
                                i1 in 0f64..50.0, i2 in 0f64..50.0, t1 in 0f64..30.0, t2 in 0f64..30.0) {
            let mut d1 = DerivedCorrection::zero(key());
            d1.sat_clock_bias_m = b1; d1.iono_delay_m = i1; d1.tropo_delay_m = t1;
            let mut d2 = DerivedCorrection::zero(key());
            d2.sat_clock_bias_m = b2; d2.iono_delay_m = i2; d2.tropo_delay_m = t2;
            let mut sum = DerivedCorrection::zero(key());
            sum.sat_clock_bias_m = b1 + b2; sum.iono_delay_m = i1 + i2; sum.tropo_delay_m = t1 + t2;
            let direct = correct(rho, 0.0, &sum).0;
            let chained = correct(correct(rho, 0.0, &d1).0, 0.0, &d2).0;
            prop_assert!((direct - chained).abs() < 1e-6);
        }
    }
}
