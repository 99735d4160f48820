//! Error evaluation against ground truth and the horizontal score
//! (mean of the 50th and 95th percentile horizontal errors).

use crate::error::{Error, Result};
use crate::geodesy::{ecef_error_to_enu, geodetic_to_ecef, vincenty_distance, GeodeticPos};
use crate::ingest::GroundTruthPoint;

/// A position estimate with its timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolutionPoint {
    pub utc_millis: i64,
    pub position: GeodeticPos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRecord {
    pub utc_millis: i64,
    pub horizontal_m: f64,
    pub vertical_m: f64,
    pub east_m: f64,
    pub north_m: f64,
    pub up_m: f64,
    pub method: String,
}

/// Pairs each solution with linearly interpolated truth. Returns the pairs
/// and the number of solutions outside the truth time span.
pub fn match_truth(
    solutions: &[SolutionPoint],
    truth: &[GroundTruthPoint],
) -> Result<(Vec<(SolutionPoint, GeodeticPos)>, usize)> {
    let mut pairs = Vec::with_capacity(solutions.len());
    let mut dropped = 0;
    for s in solutions {
        let t = s.utc_millis;
        let idx = truth.partition_point(|p| p.utc_millis < t);
        let g = if idx < truth.len() && truth[idx].utc_millis == t {
            let p = truth[idx];
            GeodeticPos { lat: p.lat, lon: p.lon, alt: p.alt }
        } else if idx == 0 || idx == truth.len() {
            dropped += 1;
            continue;
        } else {
            let (a, b) = (truth[idx - 1], truth[idx]);
            let w = (t - a.utc_millis) as f64 / (b.utc_millis - a.utc_millis) as f64;
            let mut dlon = b.lon - a.lon;
            if dlon > 180.0 {
                dlon -= 360.0;
            } else if dlon < -180.0 {
                dlon += 360.0;
            }
            let mut lon = a.lon + w * dlon;
            if lon > 180.0 {
                lon -= 360.0;
            } else if lon < -180.0 {
                lon += 360.0;
            }
            GeodeticPos { lat: a.lat + w * (b.lat - a.lat), lon, alt: a.alt + w * (b.alt - a.alt) }
        };
        pairs.push((*s, g));
    }
    if pairs.is_empty() {
        return Err(Error::NoOverlap);
    }
    Ok((pairs, dropped))
}

pub fn error_record(method: &str, est: &SolutionPoint, truth: &GeodeticPos) -> Result<ErrorRecord> {
    let enu = ecef_error_to_enu(truth, &geodetic_to_ecef(&est.position));
    let surface = |g: &GeodeticPos| GeodeticPos { alt: 0.0, ..*g };
    let horizontal_m = vincenty_distance(&surface(&est.position), &surface(truth))?;
    Ok(ErrorRecord {
        utc_millis: est.utc_millis,
        horizontal_m,
        vertical_m: (est.position.alt - truth.alt).abs(),
        east_m: enu.x,
        north_m: enu.y,
        up_m: enu.z,
        method: method.to_string(),
    })
}

pub fn error_records(method: &str, pairs: &[(SolutionPoint, GeodeticPos)]) -> Result<Vec<ErrorRecord>> {
    pairs.iter().map(|(s, t)| error_record(method, s, t)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PercentileMethod {
    /// Linear interpolation between order statistics at rank `p (n - 1)`.
    #[default]
    Linear,
    /// Smallest value with at least `p n` observations at or below it.
    NearestRank,
}

/// `p` in percent. `values` must be non-empty.
pub fn percentile(values: &[f64], p: f64, method: PercentileMethod) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Domain("percentile of an empty sample".into()));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::Domain(format!("percentile {p} outside [0, 100]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(match method {
        PercentileMethod::Linear => {
            let pos = p / 100.0 * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
        }
        PercentileMethod::NearestRank => {
            let rank = (p / 100.0 * n as f64).ceil().max(1.0) as usize;
            v[rank.min(n) - 1]
        }
    })
}

pub fn horizontal_score(errors: &[f64], method: PercentileMethod) -> Result<f64> {
    Ok(0.5 * (percentile(errors, 50.0, method)? + percentile(errors, 95.0, method)?))
}

/// Sorted values paired with cumulative fractions `i / n`.
pub fn ecdf(errors: &[f64]) -> Vec<(f64, f64)> {
    let mut v = errors.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter().enumerate().map(|(i, x)| (x, (i + 1) as f64 / n)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSummary {
    pub method: String,
    pub scenario: String,
    pub score_m: f64,
    pub horizontal_p50_m: f64,
    pub horizontal_p95_m: f64,
    pub vertical_p50_m: f64,
    pub vertical_p95_m: f64,
    pub epochs: usize,
}

pub fn summarize(method: &str, scenario: &str, records: &[ErrorRecord], pm: PercentileMethod) -> Result<ScoreSummary> {
    let h: Vec<f64> = records.iter().map(|r| r.horizontal_m).collect();
    let v: Vec<f64> = records.iter().map(|r| r.vertical_m).collect();
    Ok(ScoreSummary {
        method: method.to_string(),
        scenario: scenario.to_string(),
        score_m: horizontal_score(&h, pm)?,
        horizontal_p50_m: percentile(&h, 50.0, pm)?,
        horizontal_p95_m: percentile(&h, 95.0, pm)?,
        vertical_p50_m: percentile(&v, 50.0, pm)?,
        vertical_p95_m: percentile(&v, 95.0, pm)?,
        epochs: records.len(),
    })
}
