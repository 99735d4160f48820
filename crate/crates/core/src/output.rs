//! Solution CSV files.
//!
//! Floats are written with Rust's shortest round-trip formatting, so writing
//! the rows read back from a file reproduces it byte for byte.

use std::io::Read;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::eval::SolutionPoint;
use crate::fsm::Label;
use crate::geodesy::{ecef_to_geodetic, enu_rotation, GeodeticPos};
use crate::pipeline::EpochSolution;

pub const SOLUTION_COLUMNS: [&str; 15] = [
    "utc_millis",
    "method",
    "lat_deg",
    "lon_deg",
    "alt_m",
    "v_east_mps",
    "v_north_mps",
    "v_up_mps",
    "clock_offset_m",
    "clock_drift_mps",
    "fsm_state",
    "valid",
    "x_m",
    "y_m",
    "z_m",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolutionFix {
    pub position: GeodeticPos,
    pub velocity_enu: Vector3<f64>,
    pub clock_offset_m: f64,
    pub clock_drift_mps: f64,
    pub ecef: Vector3<f64>,
}

/// One row of a solution file.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionRow {
    pub utc_millis: i64,
    pub method: String,
    pub label: Label,
    pub fix: Option<SolutionFix>,
}

impl SolutionRow {
    pub fn from_solution(method: &str, s: &EpochSolution) -> Result<Self> {
        let fix = match &s.state {
            None => None,
            Some(state) => {
                let ecef = state.position();
                let position = ecef_to_geodetic(&ecef)?;
                Some(SolutionFix {
                    position,
                    velocity_enu: enu_rotation(&position) * state.velocity(),
                    clock_offset_m: state.clock_offset(),
                    clock_drift_mps: state.clock_drift(),
                    ecef,
                })
            }
        };
        Ok(Self { utc_millis: s.utc_millis, method: method.to_string(), label: s.label, fix })
    }

    pub fn point(&self) -> Option<SolutionPoint> {
        self.fix.map(|f| SolutionPoint { utc_millis: self.utc_millis, position: f.position })
    }
}

pub fn solution_rows(method: &str, solutions: &[EpochSolution]) -> Result<Vec<SolutionRow>> {
    solutions.iter().map(|s| SolutionRow::from_solution(method, s)).collect()
}

pub fn write_solutions(rows: &[SolutionRow]) -> String {
    let mut out = SOLUTION_COLUMNS.join(",");
    out.push('\n');
    for r in rows {
        let fields: Vec<String> = match &r.fix {
            Some(f) => vec![
                f.position.lat.to_string(),
                f.position.lon.to_string(),
                f.position.alt.to_string(),
                f.velocity_enu.x.to_string(),
                f.velocity_enu.y.to_string(),
                f.velocity_enu.z.to_string(),
                f.clock_offset_m.to_string(),
                f.clock_drift_mps.to_string(),
                r.label.to_string(),
                "1".into(),
                f.ecef.x.to_string(),
                f.ecef.y.to_string(),
                f.ecef.z.to_string(),
            ],
            None => {
                let mut v = vec![String::new(); 13];
                v[8] = r.label.to_string();
                v[9] = "0".into();
                v
            }
        };
        out.push_str(&format!("{},{},{}\n", r.utc_millis, r.method, fields.join(",")));
    }
    out
}

pub fn read_solutions<R: Read>(reader: R) -> Result<Vec<SolutionRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != SOLUTION_COLUMNS {
        return Err(Error::Format("unexpected solution file header".into()));
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Format(format!("solution row {}: bad {what}", line + 2));
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(SOLUTION_COLUMNS[i]));
        let utc_millis = rec[0].parse::<i64>().map_err(|_| bad("utc_millis"))?;
        let label = Label::parse(&rec[10]).ok_or_else(|| bad("fsm_state"))?;
        let fix = match &rec[11] {
            "1" => Some(SolutionFix {
                position: GeodeticPos { lat: num(2)?, lon: num(3)?, alt: num(4)? },
                velocity_enu: Vector3::new(num(5)?, num(6)?, num(7)?),
                clock_offset_m: num(8)?,
                clock_drift_mps: num(9)?,
                ecef: Vector3::new(num(12)?, num(13)?, num(14)?),
            }),
            "0" => None,
            _ => return Err(bad("valid")),
        };
        rows.push(SolutionRow { utc_millis, method: rec[1].to_string(), label, fix });
    }
    Ok(rows)
}
