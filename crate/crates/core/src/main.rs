use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use gnss_pvt::cli::{exit_code, run_score, run_simulate, run_solve, RunConfig, ScoreConfig};
use gnss_pvt::eval::PercentileMethod;
use gnss_pvt::ingest::Constellation;
use gnss_pvt::pipeline::Method;
use gnss_pvt::{Error, Result};

#[derive(Parser)]
#[command(name = "gnss-pvt", version, about = "Smartphone GNSS positioning with WLS, MHE, EKF and RTS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Wls,
    Mhe,
    Ekf,
    Rts,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Wls => Method::Wls,
            MethodArg::Mhe => Method::Mhe,
            MethodArg::Ekf => Method::Ekf,
            MethodArg::Rts => Method::Rts,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PercentileArg {
    Linear,
    NearestRank,
}

impl From<PercentileArg> for PercentileMethod {
    fn from(p: PercentileArg) -> Self {
        match p {
            PercentileArg::Linear => PercentileMethod::Linear,
            PercentileArg::NearestRank => PercentileMethod::NearestRank,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Estimate position, velocity and clock for every epoch of a log.
    Solve {
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long)]
        log: PathBuf,
        /// Per-satellite corrections keyed by (utc_millis, constellation, svid).
        #[arg(long)]
        derived: Option<PathBuf>,
        /// Ground truth; when given a score summary is written too.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// MHE window size N+1.
        #[arg(long, default_value_t = 10)]
        window: usize,
        #[arg(long, default_value_t = 10.0)]
        gap_s: f64,
        #[arg(long, default_value_t = 50_000.0)]
        pr_jump_m: f64,
        #[arg(long, default_value_t = 10)]
        hold_th: u32,
        #[arg(long, default_value_t = 0.1)]
        sigma_rho_floor_m: f64,
        #[arg(long, default_value_t = 0.01)]
        sigma_rate_floor_mps: f64,
        /// Comma-separated allowlist, e.g. GPS,GALILEO.
        #[arg(long, value_delimiter = ',')]
        constellations: Vec<String>,
        /// GPS-UTC leap seconds; enables GLONASS.
        #[arg(long)]
        glonass_leap_seconds: Option<i64>,
        #[arg(long, value_enum, default_value = "linear")]
        percentile: PercentileArg,
    },
    /// Score solution files against ground truth.
    Score {
        #[arg(long, num_args = 1.., required = true)]
        solutions: Vec<PathBuf>,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "")]
        scenario: String,
        #[arg(long, value_enum, default_value = "linear")]
        percentile: PercentileArg,
    },
    /// Generate a synthetic log, derived file and ground truth.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Solve {
            method,
            log,
            derived,
            truth,
            out,
            window,
            gap_s,
            pr_jump_m,
            hold_th,
            sigma_rho_floor_m,
            sigma_rate_floor_mps,
            constellations,
            glonass_leap_seconds,
            percentile,
        } => {
            let mut cfg = RunConfig::new(method.into(), log, out);
            cfg.derived = derived;
            cfg.truth = truth;
            cfg.pipeline.mhe_window = window;
            cfg.pipeline.thresholds.max_gap_s = gap_s;
            cfg.pipeline.thresholds.max_pseudorange_jump_m = pr_jump_m;
            cfg.pipeline.thresholds.hold_limit = hold_th;
            cfg.floors.sigma_rho_m = sigma_rho_floor_m;
            cfg.floors.sigma_rho_dot_mps = sigma_rate_floor_mps;
            cfg.constellations = constellations
                .iter()
                .map(|s| Constellation::parse_label(s).ok_or_else(|| Error::Config(format!("unknown constellation {s:?}"))))
                .collect::<Result<_>>()?;
            cfg.glonass_leap_seconds = glonass_leap_seconds;
            cfg.percentile = percentile.into();
            let report = run_solve(&cfg)?;
            println!("{} of {} epochs solved", report.solved, report.epochs);
            for f in report.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Score { solutions, truth, out, scenario, percentile } => {
            let summaries = run_score(&ScoreConfig { solutions, truth, out, scenario, percentile: percentile.into() })?;
            for s in summaries {
                println!(
                    "{}: score {:.4} m (P50 {:.4}, P95 {:.4}) over {} epochs",
                    s.method, s.score_m, s.horizontal_p50_m, s.horizontal_p95_m, s.epochs
                );
            }
        }
        Command::Simulate { config, out } => {
            for f in run_simulate(&config, &out)? {
                println!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
