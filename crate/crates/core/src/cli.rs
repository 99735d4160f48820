//! Command implementations behind the `gnss-pvt` binary.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use log::info;

use crate::error::{Error, Result};
use crate::eval::{ecdf, error_records, match_truth, summarize, PercentileMethod, ScoreSummary, SolutionPoint};
use crate::ingest::{
    parse_derived_csv, parse_gnss_log, parse_ground_truth, write_derived_csv, write_gnss_log, write_ground_truth,
    Constellation, GroundTruthPoint, IngestConfig, DEFAULT_LEAP_SECONDS,
};
use crate::measurements::{build_epochs, BuildConfig, EpochDiagnostics, UncertaintyFloors};
use crate::output::{read_solutions, solution_rows, write_solutions, SolutionRow};
use crate::pipeline::{run, EpochSolution, Method, PipelineConfig};
use crate::rawmeas::TimeScaleConfig;
use crate::sim::{generate, ScenarioConfig};

pub const LOG_FILE: &str = "gnss_log.txt";
pub const DERIVED_FILE: &str = "derived.csv";
pub const TRUTH_FILE: &str = "ground_truth.csv";
pub const SCORE_FILE: &str = "score_summary.csv";

/// Process exit code for an error: 3 for numerical failures, 2 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub log: PathBuf,
    pub derived: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub out: PathBuf,
    pub pipeline: PipelineConfig,
    pub floors: UncertaintyFloors,
    /// Empty keeps every supported constellation.
    pub constellations: Vec<Constellation>,
    pub ingest: IngestConfig,
    pub glonass_leap_seconds: Option<i64>,
    pub percentile: PercentileMethod,
}

impl RunConfig {
    pub fn new(method: Method, log: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            method,
            log: log.into(),
            derived: None,
            truth: None,
            out: out.into(),
            pipeline: PipelineConfig::default(),
            floors: UncertaintyFloors::default(),
            constellations: Vec::new(),
            ingest: IngestConfig::default(),
            glonass_leap_seconds: None,
            percentile: PercentileMethod::Linear,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub epochs: usize,
    pub solved: usize,
    pub files: Vec<PathBuf>,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    files.push(path.to_path_buf());
    Ok(())
}

fn read_truth(path: &Path) -> Result<Vec<GroundTruthPoint>> {
    let gt = parse_ground_truth(open(path)?)?;
    if gt.rejected > 0 {
        info!("{}: {} ground-truth rows rejected", path.display(), gt.rejected);
    }
    Ok(gt.points)
}

fn diagnostics_csv(diags: &[EpochDiagnostics], sats: &[usize], sols: &[EpochSolution]) -> String {
    let mut out = String::from(
        "utc_millis,satellites,missing_correction,implausible,unsupported,duplicates,excluded_constellation,fsm_state,action\n",
    );
    for ((d, n), s) in diags.iter().zip(sats).zip(sols) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            d.utc_millis,
            n,
            d.missing_correction,
            d.implausible,
            d.unsupported,
            d.duplicates,
            d.excluded_constellation,
            s.label,
            s.action.as_str()
        );
    }
    out
}

/// Solves a trace and writes `solutions_<method>.csv` and
/// `diagnostics_<method>.csv` (plus the EKF products for `rts`, and a score
/// summary when truth is given).
pub fn run_solve(cfg: &RunConfig) -> Result<SolveReport> {
    let derived_path = cfg.derived.as_ref().ok_or_else(|| {
        Error::MissingInput(
            "the log carries no satellite corrections; pass --derived to join satellite positions, \
             clock and atmospheric terms on (utc_millis, constellation, svid)"
                .into(),
        )
    })?;
    let log = parse_gnss_log(BufReader::new(open(&cfg.log)?), &cfg.ingest)?;
    info!("{}: {} rows, {} epochs, {} skipped", cfg.log.display(), log.raw_rows, log.epochs.len(), log.skipped);
    let derived = parse_derived_csv(open(derived_path)?)?;
    let build = BuildConfig {
        floors: cfg.floors,
        time_scales: TimeScaleConfig { glonass_leap_seconds: cfg.glonass_leap_seconds },
        constellations: cfg.constellations.clone(),
    };
    let (batches, diags) = build_epochs(&log.epochs, &derived, &build)?;
    let output = run(cfg.method, &batches, &cfg.pipeline)?;
    let solved = output.solved_epochs();
    if solved == 0 {
        return Err(Error::NoSolution);
    }

    fs::create_dir_all(&cfg.out)?;
    let mut files = Vec::new();
    let sats: Vec<usize> = batches.iter().map(|b| b.len()).collect();
    let mut runs = vec![(cfg.method.as_str(), &output.solutions)];
    if let Some(ekf) = &output.ekf {
        runs.push((Method::Ekf.as_str(), ekf));
    }
    let mut row_sets = Vec::new();
    for (name, sols) in runs {
        let rows = solution_rows(name, sols)?;
        write_file(&cfg.out.join(format!("solutions_{name}.csv")), &write_solutions(&rows), &mut files)?;
        write_file(&cfg.out.join(format!("diagnostics_{name}.csv")), &diagnostics_csv(&diags, &sats, sols), &mut files)?;
        row_sets.push((name.to_string(), rows));
    }
    if let Some(truth_path) = &cfg.truth {
        let truth = read_truth(truth_path)?;
        let mut summaries = Vec::new();
        for (name, rows) in &row_sets {
            summaries.push(score_rows(name, "", rows, &truth, cfg.percentile, &cfg.out, &mut files)?);
        }
        write_file(&cfg.out.join(SCORE_FILE), &summary_csv(&summaries), &mut files)?;
    }
    Ok(SolveReport { epochs: batches.len(), solved, files })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreConfig {
    pub solutions: Vec<PathBuf>,
    pub truth: PathBuf,
    pub out: PathBuf,
    pub scenario: String,
    pub percentile: PercentileMethod,
}

fn ecdf_csv(values: &[f64]) -> String {
    let mut out = String::from("error_m,fraction\n");
    for (x, f) in ecdf(values) {
        let _ = writeln!(out, "{x},{f}");
    }
    out
}

struct ScoredRun {
    summary: ScoreSummary,
    dropped: usize,
}

fn score_rows(
    method: &str,
    scenario: &str,
    rows: &[SolutionRow],
    truth: &[GroundTruthPoint],
    pm: PercentileMethod,
    out: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<ScoredRun> {
    let points: Vec<SolutionPoint> = rows.iter().filter_map(SolutionRow::point).collect();
    let (pairs, dropped) = match_truth(&points, truth)?;
    let records = error_records(method, &pairs)?;
    let summary = summarize(method, scenario, &records, pm)?;
    let h: Vec<f64> = records.iter().map(|r| r.horizontal_m).collect();
    let v: Vec<f64> = records.iter().map(|r| r.vertical_m).collect();
    write_file(&out.join(format!("ecdf_{method}_horizontal.csv")), &ecdf_csv(&h), files)?;
    write_file(&out.join(format!("ecdf_{method}_vertical.csv")), &ecdf_csv(&v), files)?;
    Ok(ScoredRun { summary, dropped })
}

fn summary_csv(runs: &[ScoredRun]) -> String {
    let mut out = String::from(
        "method,scenario,score_m,horizontal_p50_m,horizontal_p95_m,vertical_p50_m,vertical_p95_m,epochs,dropped\n",
    );
    for r in runs {
        let s = &r.summary;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.method,
            s.scenario,
            s.score_m,
            s.horizontal_p50_m,
            s.horizontal_p95_m,
            s.vertical_p50_m,
            s.vertical_p95_m,
            s.epochs,
            r.dropped
        );
    }
    out
}

/// Scores solution files against truth: one summary row per method found,
/// plus horizontal and vertical ECDF tables.
pub fn run_score(cfg: &ScoreConfig) -> Result<Vec<ScoreSummary>> {
    if cfg.solutions.is_empty() {
        return Err(Error::MissingInput("no solution files given".into()));
    }
    let truth = read_truth(&cfg.truth)?;
    let mut by_method: Vec<(String, Vec<SolutionRow>)> = Vec::new();
    for path in &cfg.solutions {
        for row in read_solutions(open(path)?)? {
            match by_method.iter_mut().find(|(m, _)| *m == row.method) {
                Some((_, rows)) => rows.push(row),
                None => by_method.push((row.method.clone(), vec![row])),
            }
        }
    }
    fs::create_dir_all(&cfg.out)?;
    let mut files = Vec::new();
    let mut runs = Vec::new();
    for (method, rows) in &by_method {
        runs.push(score_rows(method, &cfg.scenario, rows, &truth, cfg.percentile, &cfg.out, &mut files)?);
    }
    write_file(&cfg.out.join(SCORE_FILE), &summary_csv(&runs), &mut files)?;
    Ok(runs.into_iter().map(|r| r.summary).collect())
}

/// Generates a scenario from a TOML config and writes the log, derived and
/// ground-truth files.
pub fn run_simulate(config: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(config).map_err(|e| Error::Io(format!("{}: {e}", config.display())))?;
    let scenario = ScenarioConfig::from_toml_str(&text)?;
    let data = generate(&scenario)?;
    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    write_file(&out.join(LOG_FILE), &write_gnss_log(&data.raw, DEFAULT_LEAP_SECONDS), &mut files)?;
    write_file(&out.join(DERIVED_FILE), &write_derived_csv(&data.derived), &mut files)?;
    write_file(&out.join(TRUTH_FILE), &write_ground_truth(&data.ground_truth), &mut files)?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Divergence), 3);
        assert_eq!(exit_code(&Error::NoSolution), 3);
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::NoOverlap), 2);
    }

    #[test]
    fn missing_derived_names_the_join() {
        let cfg = RunConfig::new(Method::Wls, "/nonexistent/log.txt", "/tmp/out");
        let err = run_solve(&cfg).unwrap_err();
        assert!(matches!(&err, Error::MissingInput(m) if m.contains("--derived") && m.contains("svid")));
    }
}
