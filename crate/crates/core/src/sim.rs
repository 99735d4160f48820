//! Synthetic scenarios: ground truth, corrected observations and the matching
//! GnssLogger raw records.
//!
//! Satellites sit on a 26,600 km shell and drift along great circles at
//! 0.01 deg/s. Observation noise is i.i.d. Gaussian; the receiver clock is a
//! two-state random walk driven by the same spectral densities the filters
//! model.

use nalgebra::{Matrix2, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use crate::dynamics::{process_noise, SpectralDensities};
use crate::error::{Error, Result};
use crate::geodesy::{ecef_to_geodetic, enu_rotation, enu_to_ecef_delta, geodetic_to_ecef, GeodeticPos};
use crate::ingest::{
    receive_utc_millis, Constellation, CorrectionKey, DerivedCorrection, GroundTruthPoint, RawEpoch,
    RawMeasurement, DEFAULT_LEAP_SECONDS,
};
use crate::measurements::{sigma_from_raw, CorrectedMeasurement, EpochBatch, UncertaintyFloors};
use crate::rawmeas::{constellation_offset_nanos, NANOS_PER_WEEK};
use crate::state::StateVector;
use crate::SPEED_OF_LIGHT;

pub const SATELLITE_SHELL_RADIUS_M: f64 = 2.66e7;
pub const SATELLITE_DRIFT_DEG_PER_S: f64 = 0.01;

const START_WEEK: i64 = 2200;
const START_TOW_NANOS: i64 = 345_600_000_000_000;
const MAX_DIRECTION_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Trajectory {
    Static,
    ConstantVelocity {
        velocity_enu_mps: [f64; 3],
    },
    /// Piecewise-linear path from the origin through ENU waypoints at a
    /// constant speed, stopping at the last one.
    Waypoint {
        waypoints_enu_m: Vec<[f64; 3]>,
        speed_mps: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FaultKind {
    /// The interval ending at the fault epoch lasts `seconds`.
    Gap { seconds: f64 },
    /// Persistent receiver clock step of `meters` from the fault epoch on.
    PrJump { meters: f64 },
    /// Only the first `keep` satellites are tracked for `epochs` epochs.
    SatDrop { epochs: usize, keep: usize },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Fault {
    pub epoch: usize,
    #[serde(flatten)]
    pub kind: FaultKind,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub duration_s: f64,
    pub rate_hz: f64,
    pub trajectory: Trajectory,
    pub origin_lat_deg: f64,
    pub origin_lon_deg: f64,
    pub origin_alt_m: f64,
    pub satellites: usize,
    /// Labels assigned to satellites round-robin.
    pub constellations: Vec<String>,
    pub elevation_mask_deg: f64,
    pub sigma_rho: f64,
    pub sigma_rho_dot: f64,
    pub clock_offset_m: f64,
    pub clock_drift_mps: f64,
    pub s_t: f64,
    pub s_f: f64,
    pub faults: Vec<Fault>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            duration_s: 60.0,
            rate_hz: 1.0,
            trajectory: Trajectory::Static,
            origin_lat_deg: 1.3483,
            origin_lon_deg: 103.6831,
            origin_alt_m: 20.0,
            satellites: 8,
            constellations: vec!["GPS".into(), "GALILEO".into(), "BEIDOU".into()],
            elevation_mask_deg: 5.0,
            sigma_rho: 10.0,
            sigma_rho_dot: 0.5,
            clock_offset_m: 3_000.0,
            clock_drift_mps: 20.0,
            s_t: 1.0,
            s_f: 0.01,
            faults: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn epoch_count(&self) -> usize {
        (self.duration_s * self.rate_hz).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return bad(format!("rate_hz must be positive, got {}", self.rate_hz));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad(format!("duration_s must be positive, got {}", self.duration_s));
        }
        if self.epoch_count() == 0 {
            return bad("scenario produces no epochs".into());
        }
        let drops_under_test = self.faults.iter().any(|f| matches!(f.kind, FaultKind::SatDrop { .. }));
        if self.satellites < 4 && !drops_under_test {
            return bad(format!("need at least 4 satellites, got {}", self.satellites));
        }
        if self.satellites == 0 {
            return bad("need at least one satellite".into());
        }
        if !(self.sigma_rho >= 0.0 && self.sigma_rho_dot >= 0.0) {
            return bad("noise sigmas must be non-negative".into());
        }
        if !(0.0..90.0).contains(&self.elevation_mask_deg) {
            return bad(format!("elevation mask {} outside [0, 90)", self.elevation_mask_deg));
        }
        if self.constellations.is_empty() {
            return bad("constellation list is empty".into());
        }
        for c in self.constellation_list()? {
            constellation_offset_nanos(c)
                .map_err(|_| Error::Config(format!("{} is not supported by the simulator", c.label())))?;
        }
        SpectralDensities { s_vx: 0.0, s_vy: 0.0, s_vz: 0.0, s_t: self.s_t, s_f: self.s_f }
            .check()
            .map_err(|e| Error::Config(e.to_string()))?;
        GeodeticPos::new(self.origin_lat_deg, self.origin_lon_deg, self.origin_alt_m)
            .map_err(|e| Error::Config(e.to_string()))?;
        if let Trajectory::Waypoint { waypoints_enu_m, speed_mps } = &self.trajectory {
            if waypoints_enu_m.is_empty() || !(*speed_mps > 0.0) {
                return bad("waypoint trajectory needs waypoints and a positive speed".into());
            }
        }
        for f in &self.faults {
            match f.kind {
                FaultKind::Gap { seconds } if !(seconds > 0.0) => {
                    return bad(format!("gap at epoch {} must be positive", f.epoch));
                }
                FaultKind::Gap { .. } if f.epoch == 0 => {
                    return bad("a gap cannot end at epoch 0".into());
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn constellation_list(&self) -> Result<Vec<Constellation>> {
        self.constellations
            .iter()
            .map(|s| Constellation::parse_label(s).ok_or_else(|| Error::Config(format!("unknown constellation {s:?}"))))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutput {
    pub truth: Vec<StateVector>,
    pub batches: Vec<EpochBatch>,
    pub raw: Vec<RawEpoch>,
    pub derived: Vec<DerivedCorrection>,
    pub ground_truth: Vec<GroundTruthPoint>,
}

struct Satellite {
    constellation: Constellation,
    svid: i32,
    u0: Vector3<f64>,
    w0: Vector3<f64>,
    clock_bias_m: f64,
    clock_drift_mps: f64,
}

impl Satellite {
    fn position_velocity(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        let omega = SATELLITE_DRIFT_DEG_PER_S.to_radians();
        let (s, c) = (omega * t).sin_cos();
        let r = SATELLITE_SHELL_RADIUS_M;
        (
            (self.u0 * c + self.w0 * s) * r,
            (self.w0 * c - self.u0 * s) * (r * omega),
        )
    }
}

fn unit_normal(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

fn elevation(receiver: &Vector3<f64>, up: &Vector3<f64>, sat: &Vector3<f64>) -> f64 {
    let los = (sat - receiver).normalize();
    los.dot(up).clamp(-1.0, 1.0).asin()
}

fn place_satellites(cfg: &ScenarioConfig, origin: &GeodeticPos, rng: &mut ChaCha8Rng) -> Result<Vec<Satellite>> {
    let receiver = geodetic_to_ecef(origin);
    let up = enu_rotation(origin).row(2).transpose();
    let mask = cfg.elevation_mask_deg.to_radians();
    let constellations = cfg.constellation_list()?;
    let mut next_svid = std::collections::HashMap::new();
    let mut sats = Vec::with_capacity(cfg.satellites);
    for i in 0..cfg.satellites {
        let mut u0 = None;
        for _ in 0..MAX_DIRECTION_ATTEMPTS {
            let u = unit_normal(rng);
            if elevation(&receiver, &up, &(u * SATELLITE_SHELL_RADIUS_M)) >= mask {
                u0 = Some(u);
                break;
            }
        }
        let u0 = u0.ok_or(Error::DegenerateGeometry)?;
        let w0 = loop {
            let w = u0.cross(&unit_normal(rng));
            if w.norm() > 1e-6 {
                break w.normalize();
            }
        };
        let constellation = constellations[i % constellations.len()];
        let svid = next_svid.entry(constellation).or_insert(0);
        *svid += 1;
        sats.push(Satellite {
            constellation,
            svid: *svid,
            u0,
            w0,
            clock_bias_m: rng.random_range(-3.0e4..3.0e4),
            clock_drift_mps: rng.random_range(-0.1..0.1),
        });
    }
    Ok(sats)
}

/// ENU offset and velocity from the origin at time `t`.
fn trajectory_at(tr: &Trajectory, t: f64) -> (Vector3<f64>, Vector3<f64>) {
    match tr {
        Trajectory::Static => (Vector3::zeros(), Vector3::zeros()),
        Trajectory::ConstantVelocity { velocity_enu_mps } => {
            let v = Vector3::from(*velocity_enu_mps);
            (v * t, v)
        }
        Trajectory::Waypoint { waypoints_enu_m, speed_mps } => {
            let mut remaining = speed_mps * t;
            let mut from = Vector3::zeros();
            for wp in waypoints_enu_m {
                let to = Vector3::from(*wp);
                let seg = to - from;
                let len = seg.norm();
                if len > 0.0 && remaining < len {
                    let dir = seg / len;
                    return (from + dir * remaining, dir * *speed_mps);
                }
                remaining -= len;
                from = to;
            }
            (from, Vector3::zeros())
        }
    }
}

fn isb_m(c: Constellation) -> f64 {
    match c {
        Constellation::Beidou => 3.0,
        Constellation::Galileo => 1.0,
        _ => 0.0,
    }
}

/// Generates a scenario. Identical configs give identical outputs.
pub fn generate(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let origin = GeodeticPos::new(cfg.origin_lat_deg, cfg.origin_lon_deg, cfg.origin_alt_m)?;
    let origin_ecef = geodetic_to_ecef(&origin);
    let up = enu_rotation(&origin).row(2).transpose();
    let sats = place_satellites(cfg, &origin, &mut rng)?;
    let n = cfg.epoch_count();

    let clock_q = {
        let densities = SpectralDensities { s_vx: 0.0, s_vy: 0.0, s_vz: 0.0, s_t: cfg.s_t, s_f: cfg.s_f };
        move |period: f64| -> Result<Matrix2<f64>> {
            let q = process_noise(period, &densities)?;
            Ok(q.fixed_view::<2, 2>(StateVector::CLOCK, StateVector::CLOCK).into_owned())
        }
    };

    let boot_nanos: i64 = 1_000_000_000_000 + rng.random_range(0..1_000_000_000);
    let gps0 = START_WEEK * NANOS_PER_WEEK + START_TOW_NANOS;
    let first_full_bias = -(gps0 - boot_nanos);
    let first_bias: f64 = rng.random_range(-0.5..0.5);
    let nominal_step_nanos = (1e9 / cfg.rate_hz).round() as i64;
    let floors = UncertaintyFloors::default();

    let mut out = ScenarioOutput {
        truth: Vec::with_capacity(n),
        batches: Vec::with_capacity(n),
        raw: Vec::with_capacity(n),
        derived: Vec::new(),
        ground_truth: Vec::with_capacity(n),
    };
    let mut clock = Vector2::new(cfg.clock_offset_m, cfg.clock_drift_mps);
    let mut elapsed_nanos: i64 = 0;
    let mut prev_millis: Option<i64> = None;

    for k in 0..n {
        let mut step_nanos = nominal_step_nanos;
        let mut keep = sats.len();
        for f in &cfg.faults {
            match f.kind {
                FaultKind::Gap { seconds } if f.epoch == k => {
                    step_nanos = (seconds * 1e3).round() as i64 * 1_000_000;
                }
                FaultKind::SatDrop { epochs, keep: kept } if k >= f.epoch && k < f.epoch + epochs => {
                    keep = keep.min(kept);
                }
                _ => {}
            }
        }
        if k > 0 {
            elapsed_nanos += step_nanos;
            let period = step_nanos as f64 * 1e-9;
            let a = Matrix2::new(1.0, period, 0.0, 1.0);
            let q = clock_q(period)?;
            let l = q.cholesky().map(|c| c.l()).unwrap_or_else(|| {
                Matrix2::new(q[(0, 0)].max(0.0).sqrt(), 0.0, 0.0, q[(1, 1)].max(0.0).sqrt())
            });
            let z = Vector2::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal));
            clock = a * clock + l * z;
        }
        for f in &cfg.faults {
            if let FaultKind::PrJump { meters } = f.kind {
                if f.epoch == k {
                    clock[0] += meters;
                }
            }
        }
        let t = elapsed_nanos as f64 * 1e-9;
        let (enu_p, enu_v) = trajectory_at(&cfg.trajectory, t);
        let pos = origin_ecef + enu_to_ecef_delta(&origin, &enu_p);
        let vel = enu_to_ecef_delta(&origin, &enu_v);
        let truth = StateVector::new(pos, vel, clock[0], clock[1]);

        let gps_nanos = gps0 + elapsed_nanos;
        let tow = gps_nanos - START_WEEK * NANOS_PER_WEEK;
        let time_nanos = boot_nanos + elapsed_nanos;

        let mut raw_meas = Vec::with_capacity(keep);
        let mut corrected = Vec::with_capacity(keep);
        let mut corrections = Vec::with_capacity(keep);
        for (i, sat) in sats.iter().enumerate() {
            let eps_rho: f64 = rng.sample::<f64, _>(StandardNormal) * cfg.sigma_rho;
            let eps_rate: f64 = rng.sample::<f64, _>(StandardNormal) * cfg.sigma_rho_dot;
            if i >= keep {
                continue;
            }
            let (sp, sv) = sat.position_velocity(t);
            let los = pos - sp;
            let range = los.norm();
            let range_rate = (vel - sv).dot(&(los / range));
            let el = elevation(&pos, &up, &sp).max(5f64.to_radians());
            let mapping = 1.0 / el.sin();
            let sat_bias = sat.clock_bias_m + sat.clock_drift_mps * t;
            let iono = 5.0 * mapping;
            let tropo = 2.4 * mapping;
            let isb = isb_m(sat.constellation);

            let rho_c = range + clock[0] + eps_rho;
            let rho_dot_c = range_rate + clock[1] + eps_rate;
            let rho_raw = rho_c - sat_bias + iono + tropo + isb;
            let rho_dot_raw = rho_dot_c - sat.clock_drift_mps;

            let travel_nanos = rho_raw / SPEED_OF_LIGHT * 1e9;
            let whole_travel = travel_nanos.ceil() as i64;
            let offset = constellation_offset_nanos(sat.constellation)?;
            let first_row = k == 0 && raw_meas.is_empty();
            let m = RawMeasurement {
                constellation: sat.constellation,
                svid: sat.svid,
                time_nanos,
                time_offset_nanos: first_bias + (travel_nanos - whole_travel as f64),
                full_bias_nanos: if first_row { first_full_bias } else { first_full_bias - k as i64 },
                bias_nanos: first_bias,
                received_sv_time_nanos: tow - whole_travel + offset,
                received_sv_time_uncertainty_nanos: (cfg.sigma_rho / SPEED_OF_LIGHT * 1e9).round() as i64,
                pseudorange_rate_mps: rho_dot_raw,
                pseudorange_rate_uncertainty_mps: cfg.sigma_rho_dot,
                state_flags: 0x0F,
                cn0_dbhz: 30.0 + 15.0 * el.sin(),
            };
            let (sigma_rho, sigma_rho_dot) = sigma_from_raw(&m, &floors);
            corrected.push(CorrectedMeasurement {
                constellation: sat.constellation,
                svid: sat.svid,
                rho_c,
                rho_dot_c,
                sigma_rho,
                sigma_rho_dot,
                sat_pos: sp,
                sat_vel: sv,
            });
            corrections.push((sat, sp, sv, sat_bias, iono, tropo, isb));
            raw_meas.push(m);
        }

        let utc_millis = match raw_meas.first() {
            Some(m) => receive_utc_millis(m, first_full_bias, first_bias, DEFAULT_LEAP_SECONDS),
            None => {
                (gps_nanos + 500_000).div_euclid(1_000_000) + crate::ingest::GPS_UNIX_OFFSET_MS
                    - DEFAULT_LEAP_SECONDS * 1000
            }
        };
        for (sat, sp, sv, bias, iono, tropo, isb) in corrections {
            out.derived.push(DerivedCorrection {
                key: CorrectionKey { utc_millis, constellation: sat.constellation, svid: sat.svid },
                sat_pos_ecef: sp,
                sat_vel_ecef: sv,
                sat_clock_bias_m: bias,
                sat_clock_drift_mps: sat.clock_drift_mps,
                iono_delay_m: iono,
                tropo_delay_m: tropo,
                inter_signal_bias_m: isb,
            });
        }
        let geo = ecef_to_geodetic(&pos)?;
        out.ground_truth.push(GroundTruthPoint { utc_millis, lat: geo.lat, lon: geo.lon, alt: geo.alt });
        out.batches.push(EpochBatch {
            utc_millis,
            measurements: corrected,
            sample_period: prev_millis.map(|p| (utc_millis - p) as f64 * 1e-3),
        });
        out.raw.push(RawEpoch {
            utc_millis,
            measurements: raw_meas,
            first_full_bias_nanos: first_full_bias,
            first_bias_nanos: first_bias,
        });
        out.truth.push(truth);
        prev_millis = Some(utc_millis);
    }
    Ok(out)
}
