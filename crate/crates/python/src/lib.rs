//! Python bindings: scenario simulation, the four estimators, geodesy helpers
//! and scoring.

use gnss_pvt::eval::{self, error_records, match_truth, PercentileMethod, SolutionPoint};
use gnss_pvt::geodesy::{self, GeodeticPos};
use gnss_pvt::ingest::{write_derived_csv, write_gnss_log, write_ground_truth, DEFAULT_LEAP_SECONDS};
use gnss_pvt::output::solution_rows;
use gnss_pvt::pipeline::{self, EpochSolution, Method, PipelineConfig};
use gnss_pvt::sim::{generate, ScenarioConfig, ScenarioOutput};
use gnss_pvt::wls::{wls_solve, WlsConfig};
use gnss_pvt::{Error, StateVector};
use nalgebra::Vector3;
use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        e if e.is_numerical() => PyArithmeticError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn percentile_method(name: &str) -> PyResult<PercentileMethod> {
    match name {
        "linear" => Ok(PercentileMethod::Linear),
        "nearest-rank" => Ok(PercentileMethod::NearestRank),
        _ => Err(PyValueError::new_err(format!("unknown percentile method {name:?}"))),
    }
}

fn method(name: &str) -> PyResult<Method> {
    name.parse::<Method>().map_err(|_| PyValueError::new_err(format!("unknown method {name:?}")))
}

type State8 = [f64; 8];

fn state_tuple(s: &StateVector) -> State8 {
    let mut out = [0.0; 8];
    out.copy_from_slice(s.0.as_slice());
    out
}

/// One epoch of estimator output.
#[pyclass(frozen, get_all)]
struct Solution {
    utc_millis: i64,
    /// `[x, vx, y, vy, z, vz, clock_m, drift_mps]` in ECEF, or None.
    state: Option<State8>,
    label: String,
    action: String,
}

#[pymethods]
impl Solution {
    fn __repr__(&self) -> String {
        format!("Solution(utc_millis={}, label={:?}, solved={})", self.utc_millis, self.label, self.state.is_some())
    }
}

impl From<&EpochSolution> for Solution {
    fn from(s: &EpochSolution) -> Self {
        Self {
            utc_millis: s.utc_millis,
            state: s.state.as_ref().map(state_tuple),
            label: s.label.to_string(),
            action: s.action.as_str().to_string(),
        }
    }
}

/// A generated scenario. Construct from TOML text; an empty string gives the
/// default static scenario.
#[pyclass(frozen)]
struct Scenario {
    data: ScenarioOutput,
}

impl Scenario {
    fn run(&self, method: Method, window: usize) -> PyResult<Vec<EpochSolution>> {
        let cfg = PipelineConfig { mhe_window: window, ..PipelineConfig::default() };
        Ok(pipeline::run(method, &self.data.batches, &cfg).map_err(to_py)?.solutions)
    }
}

#[pymethods]
impl Scenario {
    #[new]
    #[pyo3(signature = (config_toml = ""))]
    fn new(config_toml: &str) -> PyResult<Self> {
        let cfg = ScenarioConfig::from_toml_str(config_toml).map_err(to_py)?;
        Ok(Self { data: generate(&cfg).map_err(to_py)? })
    }

    #[getter]
    fn epochs(&self) -> usize {
        self.data.batches.len()
    }

    /// Satellites visible at each epoch.
    fn satellite_counts(&self) -> Vec<usize> {
        self.data.batches.iter().map(|b| b.len()).collect()
    }

    /// True receiver states, one per epoch.
    fn truth(&self) -> Vec<State8> {
        self.data.truth.iter().map(state_tuple).collect()
    }

    /// Ground truth as `(utc_millis, lat_deg, lon_deg, alt_m)`.
    fn ground_truth(&self) -> Vec<(i64, f64, f64, f64)> {
        self.data.ground_truth.iter().map(|g| (g.utc_millis, g.lat, g.lon, g.alt)).collect()
    }

    /// Single-epoch weighted least squares from the origin. Returns the state
    /// and the iteration count.
    fn wls(&self, epoch: usize) -> PyResult<(State8, usize)> {
        let batch = self.data.batches.get(epoch).ok_or_else(|| PyValueError::new_err("epoch out of range"))?;
        let sol = wls_solve(batch, &StateVector::zeros(), &WlsConfig::default()).map_err(to_py)?;
        Ok((state_tuple(&sol.state), sol.diagnostics.iterations))
    }

    /// Runs `wls`, `mhe`, `ekf` or `rts` over every epoch.
    #[pyo3(signature = (method, window = 10))]
    fn solve(&self, method: &str, window: usize) -> PyResult<Vec<Solution>> {
        Ok(self.run(self::method(method)?, window)?.iter().map(Solution::from).collect())
    }

    /// Horizontal score of a method against the scenario's ground truth.
    #[pyo3(signature = (method, window = 10, percentile = "linear"))]
    fn score(&self, method: &str, window: usize, percentile: &str) -> PyResult<f64> {
        let pm = percentile_method(percentile)?;
        let m = self::method(method)?;
        let rows = solution_rows(m.as_str(), &self.run(m, window)?).map_err(to_py)?;
        let points: Vec<SolutionPoint> = rows.iter().filter_map(|r| r.point()).collect();
        let (pairs, _) = match_truth(&points, &self.data.ground_truth).map_err(to_py)?;
        let h: Vec<f64> = error_records(m.as_str(), &pairs).map_err(to_py)?.iter().map(|r| r.horizontal_m).collect();
        eval::horizontal_score(&h, pm).map_err(to_py)
    }

    /// The GnssLogger text, derived-correction CSV and ground-truth CSV.
    fn files(&self) -> (String, String, String) {
        (
            write_gnss_log(&self.data.raw, DEFAULT_LEAP_SECONDS),
            write_derived_csv(&self.data.derived),
            write_ground_truth(&self.data.ground_truth),
        )
    }
}

#[pyfunction]
fn geodetic_to_ecef(lat_deg: f64, lon_deg: f64, alt_m: f64) -> PyResult<(f64, f64, f64)> {
    let p = geodesy::geodetic_to_ecef(&GeodeticPos::new(lat_deg, lon_deg, alt_m).map_err(to_py)?);
    Ok((p.x, p.y, p.z))
}

#[pyfunction]
fn ecef_to_geodetic(x: f64, y: f64, z: f64) -> PyResult<(f64, f64, f64)> {
    let g = geodesy::ecef_to_geodetic(&Vector3::new(x, y, z)).map_err(to_py)?;
    Ok((g.lat, g.lon, g.alt))
}

/// Ellipsoidal surface distance in metres.
#[pyfunction]
fn vincenty_distance(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> PyResult<f64> {
    let a = GeodeticPos::new(lat1, lon1, 0.0).map_err(to_py)?;
    let b = GeodeticPos::new(lat2, lon2, 0.0).map_err(to_py)?;
    geodesy::vincenty_distance(&a, &b).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (values, p, method = "linear"))]
fn percentile(values: Vec<f64>, p: f64, method: &str) -> PyResult<f64> {
    eval::percentile(&values, p, percentile_method(method)?).map_err(to_py)
}

/// Mean of the 50th and 95th percentile errors.
#[pyfunction]
#[pyo3(signature = (errors, method = "linear"))]
fn horizontal_score(errors: Vec<f64>, method: &str) -> PyResult<f64> {
    eval::horizontal_score(&errors, percentile_method(method)?).map_err(to_py)
}

#[pyfunction]
fn ecdf(errors: Vec<f64>) -> Vec<(f64, f64)> {
    eval::ecdf(&errors)
}

#[pymodule]
#[pyo3(name = "gnss_pvt")]
fn gnss_pvt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scenario>()?;
    m.add_class::<Solution>()?;
    m.add_function(wrap_pyfunction!(geodetic_to_ecef, m)?)?;
    m.add_function(wrap_pyfunction!(ecef_to_geodetic, m)?)?;
    m.add_function(wrap_pyfunction!(vincenty_distance, m)?)?;
    m.add_function(wrap_pyfunction!(percentile, m)?)?;
    m.add_function(wrap_pyfunction!(horizontal_score, m)?)?;
    m.add_function(wrap_pyfunction!(ecdf, m)?)?;
    m.add("SPEED_OF_LIGHT", gnss_pvt::SPEED_OF_LIGHT)?;
    Ok(())
}
