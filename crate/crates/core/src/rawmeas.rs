//! Transmit/receive time reconstruction and raw pseudoranges.
//!
//! All nanosecond quantities stay in integer arithmetic; only the
//! sub-nanosecond terms (`TimeOffsetNanos`, `BiasNanos`) are carried as a
//! floating-point fraction next to the exact integer part.

use crate::error::{Error, Result};
use crate::ingest::{Constellation, RawEpoch, RawMeasurement};
use crate::SPEED_OF_LIGHT;

pub const NANOS_PER_WEEK: i64 = 604_800_000_000_000;
pub const NANOS_PER_HALF_WEEK: i64 = NANOS_PER_WEEK / 2;
pub const NANOS_PER_DAY: i64 = 86_400_000_000_000;
/// BeiDou time lags GPS time by 14 s.
pub const BEIDOU_OFFSET_NANOS: i64 = 14_000_000_000;
/// GLONASS time is UTC(SU), i.e. UTC + 3 h.
const GLONASS_UTC_OFFSET_NANOS: i64 = 3 * 3_600_000_000_000;

/// Plausible pseudorange window covering MEO and GEO satellites.
pub const MIN_PLAUSIBLE_RANGE_M: f64 = 1.5e7;
pub const MAX_PLAUSIBLE_RANGE_M: f64 = 5.0e7;

/// Time of week in nanoseconds, split into an exact integer part and a
/// fractional part in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TowNanos {
    pub whole: i64,
    pub frac: f64,
}

impl TowNanos {
    pub fn from_whole(whole: i64) -> Self {
        Self { whole, frac: 0.0 }.reduced()
    }

    /// Builds `whole + extra`, folding `floor(extra)` into the integer part.
    pub fn with_fraction(whole: i128, extra: f64) -> Self {
        let fl = extra.floor();
        let whole = whole + fl as i128;
        let reduced = whole.rem_euclid(NANOS_PER_WEEK as i128) as i64;
        Self { whole: reduced, frac: extra - fl }
    }

    fn reduced(self) -> Self {
        Self { whole: self.whole.rem_euclid(NANOS_PER_WEEK), frac: self.frac }
    }

    pub fn as_nanos_f64(&self) -> f64 {
        self.whole as f64 + self.frac
    }

    pub fn as_seconds(&self) -> f64 {
        self.whole as f64 * 1e-9 + self.frac * 1e-9
    }
}

/// Transmit time, receive time and the week reference of one measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimePair {
    pub t_tx: TowNanos,
    pub t_rx: TowNanos,
    pub week_number_nanos: i64,
}

/// Whole GPS weeks in nanoseconds since the GPS epoch.
pub fn week_number_nanos(full_bias_nanos: i64) -> Result<i64> {
    if full_bias_nanos >= 0 {
        return Err(Error::Domain(format!(
            "FullBiasNanos must be negative, got {full_bias_nanos}"
        )));
    }
    let neg = -(full_bias_nanos as i128);
    Ok(((neg / NANOS_PER_WEEK as i128) * NANOS_PER_WEEK as i128) as i64)
}

/// Receive time of week using the trace's initial FullBiasNanos/BiasNanos,
/// so the hardware clock drift stays inside the result.
pub fn receive_tow(epoch: &RawEpoch, m: &RawMeasurement) -> Result<TowNanos> {
    let week = week_number_nanos(epoch.first_full_bias_nanos)? as i128;
    let whole = m.time_nanos as i128 - epoch.first_full_bias_nanos as i128 - week;
    let extra = m.time_offset_nanos - epoch.first_bias_nanos;
    Ok(TowNanos::with_fraction(whole, extra))
}

/// Settings for constellations whose time scale is not week-referenced.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TimeScaleConfig {
    /// GPS-UTC leap seconds; GLONASS measurements are rejected without it.
    pub glonass_leap_seconds: Option<i64>,
}

/// Offset of a constellation's time scale from GPS time, in integer nanos.
pub fn constellation_offset_nanos(c: Constellation) -> Result<i64> {
    match c {
        Constellation::Gps | Constellation::Galileo | Constellation::Qzss | Constellation::Sbas => {
            Ok(0)
        }
        Constellation::Beidou => Ok(BEIDOU_OFFSET_NANOS),
        Constellation::Glonass => Err(Error::UnsupportedConstellation(
            "GLONASS needs a configured leap-second count".into(),
        )),
        Constellation::Unknown => Err(Error::UnsupportedConstellation("unknown".into())),
    }
}

/// Transmit time of week in GPS time.
///
/// `t_rx` is only consulted for GLONASS, whose ReceivedSvTimeNanos is a time
/// of day and needs the day-of-week from the receive time.
pub fn transmit_tow(m: &RawMeasurement, cfg: &TimeScaleConfig, t_rx: TowNanos) -> Result<TowNanos> {
    if m.constellation == Constellation::Glonass {
        let leap = cfg.glonass_leap_seconds.ok_or_else(|| {
            Error::UnsupportedConstellation("GLONASS needs a configured leap-second count".into())
        })?;
        let day_start = (t_rx.whole / NANOS_PER_DAY) * NANOS_PER_DAY;
        let mut tx = day_start as i128 + m.received_sv_time_nanos as i128
            - GLONASS_UTC_OFFSET_NANOS as i128
            + leap as i128 * 1_000_000_000;
        // keep within half a day of the receive time
        let half_day = (NANOS_PER_DAY / 2) as i128;
        let diff = tx - t_rx.whole as i128;
        if diff > half_day {
            tx -= NANOS_PER_DAY as i128;
        } else if diff < -half_day {
            tx += NANOS_PER_DAY as i128;
        }
        return Ok(TowNanos::with_fraction(tx, 0.0));
    }
    let offset = constellation_offset_nanos(m.constellation)?;
    Ok(TowNanos::with_fraction(m.received_sv_time_nanos as i128 - offset as i128, 0.0))
}

/// Raw pseudorange from receive/transmit times of week.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pseudorange {
    pub meters: f64,
    pub plausible: bool,
}

pub fn pseudorange(t_rx: TowNanos, t_tx: TowNanos) -> Pseudorange {
    let mut whole = t_rx.whole - t_tx.whole;
    if whole < -NANOS_PER_HALF_WEEK {
        whole += NANOS_PER_WEEK;
    } else if whole > NANOS_PER_HALF_WEEK {
        whole -= NANOS_PER_WEEK;
    }
    let delta_ns = whole as f64 + (t_rx.frac - t_tx.frac);
    let meters = delta_ns * 1e-9 * SPEED_OF_LIGHT;
    Pseudorange {
        meters,
        plausible: (MIN_PLAUSIBLE_RANGE_M..=MAX_PLAUSIBLE_RANGE_M).contains(&meters),
    }
}

/// Full time pair for one measurement of an epoch.
pub fn time_pair(epoch: &RawEpoch, m: &RawMeasurement, cfg: &TimeScaleConfig) -> Result<TimePair> {
    let t_rx = receive_tow(epoch, m)?;
    let t_tx = transmit_tow(m, cfg, t_rx)?;
    Ok(TimePair {
        t_tx,
        t_rx,
        week_number_nanos: week_number_nanos(epoch.first_full_bias_nanos)?,
    })
}
