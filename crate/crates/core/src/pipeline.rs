//! Runs an estimator over a trace under its state machine.

use std::fmt;
use std::str::FromStr;

use log::{debug, warn};

use crate::dynamics::{estimate_spectral_densities, state_transition, DensityFloors, ProcessModel, SpectralDensities};
use crate::error::{Error, Result};
use crate::estimators::{ekf_hold, ekf_seed, ekf_step, mhe_solve, rts_smooth, EkfConfig, FilterState, MheConfig, MheWindow, StepKind};
use crate::fsm::{advance, advance_rts, detect, Action, FsmState, Label, MachineKind, Thresholds};
use crate::measurements::EpochBatch;
use crate::state::StateVector;
use crate::wls::{wls_solve, WlsConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Wls,
    Mhe,
    Ekf,
    Rts,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Wls, Method::Mhe, Method::Ekf, Method::Rts];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Wls => "wls",
            Method::Mhe => "mhe",
            Method::Ekf => "ekf",
            Method::Rts => "rts",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wls" => Ok(Method::Wls),
            "mhe" => Ok(Method::Mhe),
            "ekf" => Ok(Method::Ekf),
            "rts" => Ok(Method::Rts),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub thresholds: Thresholds,
    /// MHE window size N+1.
    pub mhe_window: usize,
    pub mhe: MheConfig,
    pub wls: WlsConfig,
    pub ekf: EkfConfig,
    pub density_floors: DensityFloors,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            thresholds: Thresholds::default(),
            mhe_window: 10,
            mhe: MheConfig::default(),
            wls: WlsConfig::default(),
            ekf: EkfConfig::default(),
            density_floors: DensityFloors::default(),
        }
    }
}

/// Estimate (or its absence) at one epoch with the machine state behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSolution {
    pub utc_millis: i64,
    pub state: Option<StateVector>,
    pub label: Label,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub method: Method,
    pub solutions: Vec<EpochSolution>,
    /// Forward EKF solutions a smoother run was built on.
    pub ekf: Option<Vec<EpochSolution>>,
}

impl PipelineOutput {
    pub fn solved_epochs(&self) -> usize {
        self.solutions.iter().filter(|s| s.state.is_some()).count()
    }
}

pub fn run(method: Method, batches: &[EpochBatch], cfg: &PipelineConfig) -> Result<PipelineOutput> {
    if cfg.mhe_window == 0 {
        return Err(Error::Config("MHE window must hold at least one epoch".into()));
    }
    let (solutions, ekf) = match method {
        Method::Wls => (run_wls(batches, cfg)?, None),
        Method::Mhe => (run_mhe(batches, cfg)?, None),
        Method::Ekf => (run_ekf(batches, cfg)?.solutions, None),
        Method::Rts => {
            let fwd = run_ekf(batches, cfg)?;
            (smooth(batches, &fwd)?, Some(fwd.solutions))
        }
    };
    Ok(PipelineOutput { method, solutions, ekf })
}

fn accept(result: Result<StateVector>, utc_millis: i64) -> Result<Option<StateVector>> {
    match result {
        Ok(s) if s.is_plausible() => Ok(Some(s)),
        Ok(_) => {
            debug!("{utc_millis}: implausible estimate dropped");
            Ok(None)
        }
        Err(e @ Error::Invariant(_)) => Err(e),
        Err(e) => {
            debug!("{utc_millis}: {e}");
            Ok(None)
        }
    }
}

fn solve_wls(epoch: &EpochBatch, init: Option<&StateVector>, cfg: &WlsConfig) -> Result<StateVector> {
    let sol = wls_solve(epoch, init.unwrap_or(&StateVector::zeros()), cfg)?;
    if !sol.diagnostics.converged {
        return Err(Error::Divergence);
    }
    Ok(sol.state)
}

fn run_wls(batches: &[EpochBatch], cfg: &PipelineConfig) -> Result<Vec<EpochSolution>> {
    let mut fsm = FsmState::new(MachineKind::Wls, cfg.thresholds.hold_limit, 1);
    let mut last: Option<StateVector> = None;
    let mut out = Vec::with_capacity(batches.len());
    for (k, epoch) in batches.iter().enumerate() {
        let flags = detect(k.checked_sub(1).map(|j| &batches[j]), epoch, &cfg.thresholds);
        let (next, action) = advance(&fsm, &flags)?;
        fsm = next;
        let state = match action {
            Action::RunWls => accept(solve_wls(epoch, last.as_ref(), &cfg.wls), epoch.utc_millis)?,
            _ => None,
        };
        if state.is_some() {
            last = state;
        }
        out.push(EpochSolution { utc_millis: epoch.utc_millis, state, label: fsm.label, action });
    }
    Ok(out)
}

fn propagate(state: &StateVector, epoch: &EpochBatch) -> StateVector {
    match epoch.sample_period.map(state_transition) {
        Some(Ok(a)) => StateVector(a * state.0),
        _ => *state,
    }
}

fn run_mhe(batches: &[EpochBatch], cfg: &PipelineConfig) -> Result<Vec<EpochSolution>> {
    let window_size = u32::try_from(cfg.mhe_window).map_err(|_| Error::Config("MHE window too large".into()))?;
    let mut fsm = FsmState::new(MachineKind::Mhe, cfg.thresholds.hold_limit, window_size);
    let mut window = MheWindow::new(cfg.mhe_window);
    let mut last: Option<StateVector> = None;
    let mut out = Vec::with_capacity(batches.len());
    for (k, epoch) in batches.iter().enumerate() {
        let flags = detect(k.checked_sub(1).map(|j| &batches[j]), epoch, &cfg.thresholds);
        let (next, action) = advance(&fsm, &flags)?;
        fsm = next;
        if fsm.counter2 == 1 {
            window.clear();
            last = None;
        }
        window.push(epoch.clone());
        let state = match action {
            Action::RunWls => accept(solve_wls(epoch, None, &cfg.wls), epoch.utc_millis)?,
            Action::RunMhe => {
                let init = match &last {
                    Some(s) => propagate(s, epoch),
                    None => solve_wls(epoch, None, &cfg.wls).unwrap_or_else(|_| StateVector::zeros()),
                };
                accept(mhe_solve(&window, &init, &cfg.mhe).map(|s| s.state), epoch.utc_millis)?
            }
            _ => None,
        };
        if state.is_some() {
            last = state;
        }
        out.push(EpochSolution { utc_millis: epoch.utc_millis, state, label: fsm.label, action });
    }
    Ok(out)
}

/// Forward filter products needed by the smoother.
struct ForwardPass {
    solutions: Vec<EpochSolution>,
    /// Filter state per epoch with the model that propagated it from the
    /// previous epoch (`None` for seeds).
    states: Vec<Option<(FilterState, Option<ProcessModel>)>>,
}

fn run_ekf(batches: &[EpochBatch], cfg: &PipelineConfig) -> Result<ForwardPass> {
    let mut fsm = FsmState::new(MachineKind::Ekf, cfg.thresholds.hold_limit, 1);
    let mut filter: Option<FilterState> = None;
    // posterior history for the spectral density estimate: (state, utc)
    let mut history: Vec<(StateVector, i64)> = Vec::new();
    let mut densities: SpectralDensities = cfg.density_floors.as_densities();
    let mut pass = ForwardPass { solutions: Vec::with_capacity(batches.len()), states: Vec::with_capacity(batches.len()) };

    for (k, epoch) in batches.iter().enumerate() {
        let flags = detect(k.checked_sub(1).map(|j| &batches[j]), epoch, &cfg.thresholds);
        let (next, action) = advance(&fsm, &flags)?;
        fsm = next;
        let mut step: Option<(FilterState, Option<ProcessModel>)> = None;
        match action {
            Action::RunWls => {
                if fsm.counter1 == 1 {
                    history.clear();
                    densities = cfg.density_floors.as_densities();
                }
                let init = history.last().map(|(s, _)| *s);
                match accept(solve_wls(epoch, init.as_ref(), &cfg.wls), epoch.utc_millis)? {
                    Some(s) => step = Some((ekf_seed(s, cfg.ekf.initial_covariance(), k), None)),
                    None => fsm = FsmState::new(MachineKind::Ekf, cfg.thresholds.hold_limit, 1),
                }
            }
            Action::RunEkfUpdate | Action::RunEkfHold => {
                let prev = filter.as_ref().ok_or_else(|| Error::Invariant("EKF step without a filter state".into()))?;
                let period = epoch
                    .sample_period
                    .filter(|t| *t > 0.0)
                    .ok_or_else(|| Error::Invariant("EKF step without a sample period".into()))?;
                if action == Action::RunEkfUpdate {
                    if let [.., (older, t0), (newer, t1)] = history.as_slice() {
                        densities = estimate_spectral_densities(older, newer, (t1 - t0) as f64 * 1e-3, &cfg.density_floors)?;
                    }
                }
                let model = ProcessModel::new(period, densities)?;
                let result = if action == Action::RunEkfUpdate {
                    ekf_step(prev, &model, epoch, &cfg.ekf)
                } else {
                    ekf_hold(prev, &model)
                };
                match result {
                    Ok(mut st) if st.x_post.is_plausible() => {
                        st.epoch_index = k;
                        step = Some((st, Some(model)));
                    }
                    Ok(_) | Err(Error::FilterDiverged) | Err(Error::Numerical(_)) => {
                        warn!("{}: EKF failed, machine reset", epoch.utc_millis);
                        fsm = FsmState::new(MachineKind::Ekf, cfg.thresholds.hold_limit, 1);
                    }
                    Err(e) => return Err(e),
                }
            }
            _ => {}
        }
        filter = step.as_ref().map(|(s, _)| s.clone());
        if let Some((s, _)) = &step {
            if s.kind != StepKind::Hold {
                history.push((s.x_post, epoch.utc_millis));
                if history.len() > 2 {
                    history.remove(0);
                }
            }
        }
        let state = step.as_ref().map(|(s, _)| s.x_post);
        pass.solutions.push(EpochSolution { utc_millis: epoch.utc_millis, state, label: fsm.label, action });
        pass.states.push(step);
    }
    Ok(pass)
}

fn smooth(batches: &[EpochBatch], fwd: &ForwardPass) -> Result<Vec<EpochSolution>> {
    let n = batches.len();
    let mut fsm = FsmState::new(MachineKind::Rts, 0, 1);
    let mut labels = vec![(Label::Stop, Action::EmitNone); n];
    for k in (0..n).rev() {
        let present = fwd.states[k].is_some();
        let next_disconnected = k + 1 < n && !matches!(&fwd.states[k + 1], Some((_, Some(_))));
        let (next, action) = advance_rts(&fsm, present, next_disconnected)?;
        fsm = next;
        labels[k] = (fsm.label, action);
    }

    let mut states: Vec<Option<StateVector>> = fwd.states.iter().map(|s| s.as_ref().map(|(f, _)| f.x_post)).collect();
    let mut k = 0;
    while k < n {
        if fwd.states[k].is_none() {
            k += 1;
            continue;
        }
        // segment runs forward from k through the next boundary
        let start = k;
        while labels[k].1 != Action::SegmentBoundary {
            k += 1;
        }
        let end = k;
        k += 1;
        if end == start {
            continue;
        }
        let forward: Vec<FilterState> = (start..=end).map(|i| fwd.states[i].as_ref().map(|(f, _)| f.clone()).unwrap()).collect();
        let models: Vec<ProcessModel> = (start + 1..=end)
            .map(|i| fwd.states[i].as_ref().and_then(|(_, m)| m.clone()).unwrap())
            .collect();
        match rts_smooth(&forward, &models) {
            Ok(sm) => {
                for (i, s) in (start..=end).zip(sm) {
                    states[i] = Some(s.x_smooth);
                }
            }
            Err(e) if e.is_numerical() => {
                warn!("smoothing segment {}..={} skipped: {e}", batches[start].utc_millis, batches[end].utc_millis);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(batches
        .iter()
        .zip(states)
        .zip(labels)
        .map(|((b, state), (label, action))| EpochSolution { utc_millis: b.utc_millis, state, label, action })
        .collect())
}
