//! Readers and writers for GnssLogger raw logs, derived-correction CSVs and
//! ground-truth CSVs.
//!
//! Column lookup is always by header name so files from different logger
//! versions (and GSDC-style column names) parse without configuration.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, Read};

use log::warn;
use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::rawmeas::{self, NANOS_PER_WEEK};

/// Milliseconds between the Unix epoch and the GPS epoch (1980-01-06).
pub const GPS_UNIX_OFFSET_MS: i64 = 315_964_800_000;
pub const DEFAULT_LEAP_SECONDS: i64 = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Constellation {
    Gps,
    Glonass,
    Galileo,
    Beidou,
    Qzss,
    Sbas,
    Unknown,
}

impl Constellation {
    /// Android `GnssStatus.CONSTELLATION_*` code.
    pub fn from_android_code(code: i64) -> Self {
        match code {
            1 => Self::Gps,
            2 => Self::Sbas,
            3 => Self::Glonass,
            4 => Self::Qzss,
            5 => Self::Beidou,
            6 => Self::Galileo,
            _ => Self::Unknown,
        }
    }

    pub fn android_code(self) -> i64 {
        match self {
            Self::Gps => 1,
            Self::Sbas => 2,
            Self::Glonass => 3,
            Self::Qzss => 4,
            Self::Beidou => 5,
            Self::Galileo => 6,
            Self::Unknown => 0,
        }
    }

    /// Parses a label (`GPS`, `BDS`, ...) or an Android numeric code.
    pub fn parse_label(s: &str) -> Option<Self> {
        let s = s.trim();
        if let Ok(code) = s.parse::<i64>() {
            return match Self::from_android_code(code) {
                Self::Unknown => None,
                c => Some(c),
            };
        }
        match s.to_ascii_uppercase().as_str() {
            "GPS" => Some(Self::Gps),
            "GLONASS" | "GLO" => Some(Self::Glonass),
            "GALILEO" | "GAL" => Some(Self::Galileo),
            "BEIDOU" | "BDS" => Some(Self::Beidou),
            "QZSS" | "QZS" => Some(Self::Qzss),
            "SBAS" => Some(Self::Sbas),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Gps => "GPS",
            Self::Glonass => "GLONASS",
            Self::Galileo => "GALILEO",
            Self::Beidou => "BEIDOU",
            Self::Qzss => "QZSS",
            Self::Sbas => "SBAS",
            Self::Unknown => "UNKNOWN",
        }
    }

    fn week_referenced(self) -> bool {
        !matches!(self, Self::Glonass | Self::Unknown)
    }
}

/// One satellite's raw fields at one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMeasurement {
    pub constellation: Constellation,
    pub svid: i32,
    pub time_nanos: i64,
    pub time_offset_nanos: f64,
    pub full_bias_nanos: i64,
    pub bias_nanos: f64,
    pub received_sv_time_nanos: i64,
    pub received_sv_time_uncertainty_nanos: i64,
    pub pseudorange_rate_mps: f64,
    pub pseudorange_rate_uncertainty_mps: f64,
    pub state_flags: u32,
    pub cn0_dbhz: f64,
}

impl RawMeasurement {
    fn check(&self) -> std::result::Result<(), &'static str> {
        if self.full_bias_nanos >= 0 {
            return Err("FullBiasNanos must be negative");
        }
        if self.received_sv_time_uncertainty_nanos < 0 || self.pseudorange_rate_uncertainty_mps < 0.0
        {
            return Err("negative uncertainty");
        }
        if self.constellation.week_referenced()
            && !(0..NANOS_PER_WEEK).contains(&self.received_sv_time_nanos)
        {
            return Err("ReceivedSvTimeNanos outside the week");
        }
        Ok(())
    }
}

/// Measurements sharing one `TimeNanos`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEpoch {
    pub utc_millis: i64,
    pub measurements: Vec<RawMeasurement>,
    /// FullBiasNanos of the first record of the trace.
    pub first_full_bias_nanos: i64,
    /// BiasNanos of the first record of the trace.
    pub first_bias_nanos: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestConfig {
    /// When set, a record is kept only if `state & mask == mask`.
    pub required_state_mask: Option<u32>,
    /// Fallback GPS-UTC leap seconds when the log has no `LeapSecond` column value.
    pub leap_seconds: i64,
}

/// `STATE_TOW_DECODED` bit of `GnssMeasurement.getState()`.
pub const STATE_TOW_DECODED: u32 = 0x8;

impl Default for IngestConfig {
    fn default() -> Self {
        Self { required_state_mask: None, leap_seconds: DEFAULT_LEAP_SECONDS }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLog {
    pub epochs: Vec<RawEpoch>,
    /// `Raw` rows seen in the file.
    pub raw_rows: usize,
    /// Rows rejected for missing/unparseable fields or broken invariants.
    pub skipped: usize,
    /// Rows dropped by the state-mask filter.
    pub filtered: usize,
}

const MANDATORY_RAW_FIELDS: [&str; 10] = [
    "ConstellationType",
    "Svid",
    "TimeNanos",
    "TimeOffsetNanos",
    "FullBiasNanos",
    "BiasNanos",
    "ReceivedSvTimeNanos",
    "ReceivedSvTimeUncertaintyNanos",
    "PseudorangeRateMetersPerSecond",
    "PseudorangeRateUncertaintyMetersPerSecond",
];

/// Integer field that may have been written as `123` or `123.0`.
fn parse_int(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    let (int_part, frac) = s.split_once('.')?;
    if frac.chars().all(|c| c == '0') {
        int_part.parse().ok()
    } else {
        None
    }
}

fn parse_float(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

struct RawHeader {
    index: HashMap<String, usize>,
}

impl RawHeader {
    fn get<'a>(&self, fields: &[&'a str], name: &str) -> Option<&'a str> {
        self.index
            .get(name)
            .and_then(|&i| fields.get(i).copied())
            .filter(|s| !s.trim().is_empty())
    }
}

fn parse_raw_row(h: &RawHeader, fields: &[&str]) -> Option<(RawMeasurement, Option<i64>)> {
    let m = RawMeasurement {
        constellation: Constellation::from_android_code(parse_int(h.get(fields, "ConstellationType")?)?),
        svid: parse_int(h.get(fields, "Svid")?)? as i32,
        time_nanos: parse_int(h.get(fields, "TimeNanos")?)?,
        time_offset_nanos: parse_float(h.get(fields, "TimeOffsetNanos")?)?,
        full_bias_nanos: parse_int(h.get(fields, "FullBiasNanos")?)?,
        bias_nanos: parse_float(h.get(fields, "BiasNanos")?)?,
        received_sv_time_nanos: parse_int(h.get(fields, "ReceivedSvTimeNanos")?)?,
        received_sv_time_uncertainty_nanos: parse_int(h.get(fields, "ReceivedSvTimeUncertaintyNanos")?)?,
        pseudorange_rate_mps: parse_float(h.get(fields, "PseudorangeRateMetersPerSecond")?)?,
        pseudorange_rate_uncertainty_mps: parse_float(
            h.get(fields, "PseudorangeRateUncertaintyMetersPerSecond")?,
        )?,
        state_flags: h.get(fields, "State").and_then(parse_int).unwrap_or(0) as u32,
        cn0_dbhz: h.get(fields, "Cn0DbHz").and_then(parse_float).unwrap_or(0.0),
    };
    let leap = h.get(fields, "LeapSecond").and_then(parse_int);
    Some((m, leap))
}

/// UTC milliseconds of a measurement's full receive time (no week folding).
pub fn receive_utc_millis(m: &RawMeasurement, first_full_bias: i64, first_bias: f64, leap_seconds: i64) -> i64 {
    let extra = m.time_offset_nanos - first_bias;
    let gps_nanos = m.time_nanos as i128 - first_full_bias as i128 + extra.round() as i128;
    let gps_ms = (gps_nanos + 500_000).div_euclid(1_000_000) as i64;
    gps_ms + GPS_UNIX_OFFSET_MS - leap_seconds * 1000
}

/// Parses a GnssLogger text log into time-ordered epochs.
pub fn parse_gnss_log<R: BufRead>(reader: R, cfg: &IngestConfig) -> Result<ParsedLog> {
    let mut header: Option<RawHeader> = None;
    let mut raw_rows = 0;
    let mut skipped = 0;
    let mut filtered = 0;
    let mut first_bias: Option<(i64, f64)> = None;
    let mut leap_seconds: Option<i64> = None;
    let mut groups: BTreeMap<i64, Vec<RawMeasurement>> = BTreeMap::new();

    for line in reader.lines() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim_start();
            if rest.starts_with("Raw,") {
                let index = rest
                    .split(',')
                    .enumerate()
                    .map(|(i, name)| (name.trim().to_string(), i))
                    .collect::<HashMap<_, _>>();
                if let Some(missing) = MANDATORY_RAW_FIELDS.iter().find(|f| !index.contains_key(**f)) {
                    return Err(Error::Format(format!("Raw header lacks mandatory field {missing}")));
                }
                header = Some(RawHeader { index });
            }
            continue;
        }
        if !line.starts_with("Raw,") {
            continue;
        }
        raw_rows += 1;
        let h = header
            .as_ref()
            .ok_or_else(|| Error::Format("Raw record before any '# Raw' header".into()))?;
        let fields: Vec<&str> = line.split(',').collect();
        let Some((m, leap)) = parse_raw_row(h, &fields) else {
            skipped += 1;
            continue;
        };
        if let Err(why) = m.check() {
            log::debug!("skipping raw record svid {}: {why}", m.svid);
            skipped += 1;
            continue;
        }
        if let Some(mask) = cfg.required_state_mask {
            if m.state_flags & mask != mask {
                filtered += 1;
                continue;
            }
        }
        if first_bias.is_none() {
            first_bias = Some((m.full_bias_nanos, m.bias_nanos));
        }
        if leap_seconds.is_none() {
            leap_seconds = leap;
        }
        groups.entry(m.time_nanos).or_default().push(m);
    }

    if header.is_none() {
        return Err(Error::Format("missing '# Raw' header".into()));
    }
    let Some((ffb, fb)) = first_bias else {
        return Err(Error::EmptyInput);
    };
    let leap = leap_seconds.unwrap_or(cfg.leap_seconds);
    let epochs = groups
        .into_values()
        .map(|measurements| RawEpoch {
            utc_millis: receive_utc_millis(&measurements[0], ffb, fb, leap),
            measurements,
            first_full_bias_nanos: ffb,
            first_bias_nanos: fb,
        })
        .collect();
    Ok(ParsedLog { epochs, raw_rows, skipped, filtered })
}

/// Column order written by [`write_gnss_log`].
const RAW_COLUMNS: [&str; 17] = [
    "utcTimeMillis",
    "TimeNanos",
    "LeapSecond",
    "FullBiasNanos",
    "BiasNanos",
    "Svid",
    "TimeOffsetNanos",
    "State",
    "ReceivedSvTimeNanos",
    "ReceivedSvTimeUncertaintyNanos",
    "Cn0DbHz",
    "PseudorangeRateMetersPerSecond",
    "PseudorangeRateUncertaintyMetersPerSecond",
    "AccumulatedDeltaRangeState",
    "CarrierFrequencyHz",
    "MultipathIndicator",
    "ConstellationType",
];

/// Writes epochs in GnssLogger `Raw` format.
///
/// Each measurement carries its own FullBiasNanos/BiasNanos; only the first
/// record's values are used when reading back.
pub fn write_gnss_log(epochs: &[RawEpoch], leap_seconds: i64) -> String {
    let mut out = String::new();
    out.push_str("# Version: v3.0.0.1 Platform: 12 Manufacturer: synthetic Model: simulator\n");
    out.push_str("#\n");
    let _ = writeln!(out, "# Raw,{}", RAW_COLUMNS.join(","));
    out.push_str("#\n");
    for ep in epochs {
        for m in &ep.measurements {
            let _ = writeln!(
                out,
                "Raw,{},{},{},{},{},{},{},{},{},{},{},{},{},0,1575420030,0,{}",
                ep.utc_millis,
                m.time_nanos,
                leap_seconds,
                m.full_bias_nanos,
                m.bias_nanos,
                m.svid,
                m.time_offset_nanos,
                m.state_flags,
                m.received_sv_time_nanos,
                m.received_sv_time_uncertainty_nanos,
                m.cn0_dbhz,
                m.pseudorange_rate_mps,
                m.pseudorange_rate_uncertainty_mps,
                m.constellation.android_code(),
            );
        }
    }
    out
}

/// Key joining derived corrections to raw measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CorrectionKey {
    pub utc_millis: i64,
    pub constellation: Constellation,
    pub svid: i32,
}

/// Satellite state and delay terms for one (epoch, satellite).
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedCorrection {
    pub key: CorrectionKey,
    pub sat_pos_ecef: Vector3<f64>,
    pub sat_vel_ecef: Vector3<f64>,
    pub sat_clock_bias_m: f64,
    pub sat_clock_drift_mps: f64,
    pub iono_delay_m: f64,
    pub tropo_delay_m: f64,
    pub inter_signal_bias_m: f64,
}

impl DerivedCorrection {
    fn check(&self) -> bool {
        let r = self.sat_pos_ecef.norm();
        self.iono_delay_m >= 0.0 && self.tropo_delay_m >= 0.0 && (2.0e7..=4.5e7).contains(&r)
    }

    /// Identity correction used for algebraic tests.
    pub fn zero(key: CorrectionKey) -> Self {
        Self {
            key,
            sat_pos_ecef: Vector3::zeros(),
            sat_vel_ecef: Vector3::zeros(),
            sat_clock_bias_m: 0.0,
            sat_clock_drift_mps: 0.0,
            iono_delay_m: 0.0,
            tropo_delay_m: 0.0,
            inter_signal_bias_m: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DerivedTable {
    pub corrections: BTreeMap<CorrectionKey, DerivedCorrection>,
    pub duplicates: usize,
    pub skipped: usize,
}

impl DerivedTable {
    pub fn get(&self, key: &CorrectionKey) -> Option<&DerivedCorrection> {
        self.corrections.get(key)
    }

    pub fn len(&self) -> usize {
        self.corrections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corrections.is_empty()
    }
}

/// Column lookup by any of several accepted names.
struct Columns {
    index: HashMap<String, usize>,
}

impl Columns {
    fn new(headers: &csv::StringRecord) -> Self {
        Self {
            index: headers
                .iter()
                .enumerate()
                .map(|(i, h)| (h.trim().to_ascii_lowercase(), i))
                .collect(),
        }
    }

    fn find(&self, aliases: &[&str]) -> Option<usize> {
        aliases.iter().find_map(|a| self.index.get(&a.to_ascii_lowercase()).copied())
    }

    fn require(&self, aliases: &[&str]) -> Result<usize> {
        self.find(aliases)
            .ok_or_else(|| Error::Format(format!("CSV lacks a '{}' column", aliases[0])))
    }
}

const DERIVED_COLUMNS: [&[&str]; 14] = [
    &["utc_millis", "utcTimeMillis"],
    &["constellation", "ConstellationType"],
    &["svid", "Svid"],
    &["sat_x_m", "SvPositionXEcefMeters"],
    &["sat_y_m", "SvPositionYEcefMeters"],
    &["sat_z_m", "SvPositionZEcefMeters"],
    &["sat_vx_mps", "SvVelocityXEcefMetersPerSecond"],
    &["sat_vy_mps", "SvVelocityYEcefMetersPerSecond"],
    &["sat_vz_mps", "SvVelocityZEcefMetersPerSecond"],
    &["sat_clock_bias_m", "SvClockBiasMeters"],
    &["sat_clock_drift_mps", "SvClockDriftMetersPerSecond"],
    &["iono_delay_m", "IonosphericDelayMeters"],
    &["tropo_delay_m", "TroposphericDelayMeters"],
    &["inter_signal_bias_m", "IsrbMeters"],
];

/// Parses a derived-correction CSV. Later rows win on duplicate keys.
pub fn parse_derived_csv<R: Read>(reader: R) -> Result<DerivedTable> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let cols = Columns::new(rdr.headers()?);
    let idx = DERIVED_COLUMNS.iter().map(|a| cols.require(a)).collect::<Result<Vec<_>>>()?;
    let mut table = DerivedTable::default();
    for rec in rdr.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(idx[i]).unwrap_or("");
        let parsed = (|| {
            let key = CorrectionKey {
                utc_millis: parse_int(field(0))?,
                constellation: Constellation::parse_label(field(1))?,
                svid: parse_int(field(2))? as i32,
            };
            let f = |i: usize| parse_float(field(i));
            Some(DerivedCorrection {
                key,
                sat_pos_ecef: Vector3::new(f(3)?, f(4)?, f(5)?),
                sat_vel_ecef: Vector3::new(f(6)?, f(7)?, f(8)?),
                sat_clock_bias_m: f(9)?,
                sat_clock_drift_mps: f(10)?,
                iono_delay_m: f(11)?,
                tropo_delay_m: f(12)?,
                inter_signal_bias_m: f(13)?,
            })
        })();
        match parsed {
            Some(d) if d.check() => {
                if table.corrections.insert(d.key, d).is_some() {
                    table.duplicates += 1;
                }
            }
            _ => table.skipped += 1,
        }
    }
    if table.duplicates > 0 {
        warn!("derived corrections: {} duplicate keys (last row kept)", table.duplicates);
    }
    Ok(table)
}

pub fn write_derived_csv(corrections: &[DerivedCorrection]) -> String {
    let mut out = String::new();
    let names: Vec<&str> = DERIVED_COLUMNS.iter().map(|a| a[0]).collect();
    out.push_str(&names.join(","));
    out.push('\n');
    for d in corrections {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            d.key.utc_millis,
            d.key.constellation.label(),
            d.key.svid,
            d.sat_pos_ecef.x,
            d.sat_pos_ecef.y,
            d.sat_pos_ecef.z,
            d.sat_vel_ecef.x,
            d.sat_vel_ecef.y,
            d.sat_vel_ecef.z,
            d.sat_clock_bias_m,
            d.sat_clock_drift_mps,
            d.iono_delay_m,
            d.tropo_delay_m,
            d.inter_signal_bias_m,
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthPoint {
    pub utc_millis: i64,
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub points: Vec<GroundTruthPoint>,
    pub rejected: usize,
}

/// Parses a ground-truth CSV; output is sorted with strictly increasing time.
pub fn parse_ground_truth<R: Read>(reader: R) -> Result<GroundTruth> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let cols = Columns::new(rdr.headers()?);
    let t = cols.require(&["utc_millis", "UnixTimeMillis", "utcTimeMillis"])?;
    let la = cols.require(&["lat", "lat_deg", "LatitudeDegrees"])?;
    let lo = cols.require(&["lon", "lon_deg", "LongitudeDegrees"])?;
    let al = cols.require(&["alt", "alt_m", "AltitudeMeters"])?;
    let mut truth = GroundTruth::default();
    for rec in rdr.records() {
        let rec = rec?;
        let get = |i: usize| rec.get(i).unwrap_or("");
        let p = (|| {
            Some(GroundTruthPoint {
                utc_millis: parse_int(get(t))?,
                lat: parse_float(get(la))?,
                lon: parse_float(get(lo))?,
                alt: parse_float(get(al))?,
            })
        })();
        match p {
            Some(p) if p.lat.abs() <= 90.0 && p.lon.abs() <= 180.0 => truth.points.push(p),
            _ => truth.rejected += 1,
        }
    }
    truth.points.sort_by_key(|p| p.utc_millis);
    let before = truth.points.len();
    truth.points.dedup_by_key(|p| p.utc_millis);
    truth.rejected += before - truth.points.len();
    Ok(truth)
}

pub fn write_ground_truth(points: &[GroundTruthPoint]) -> String {
    let mut out = String::from("utc_millis,lat_deg,lon_deg,alt_m\n");
    for p in points {
        let _ = writeln!(out, "{},{},{},{}", p.utc_millis, p.lat, p.lon, p.alt);
    }
    out
}

/// Week-reduced receive time of a raw epoch's first measurement, seconds.
pub fn epoch_receive_seconds(ep: &RawEpoch) -> Option<f64> {
    let m = ep.measurements.first()?;
    rawmeas::receive_tow(ep, m).ok().map(|t| t.as_seconds())
}
