//! Discontinuity detection and the per-estimator state machines.
//!
//! Three discontinuities are tracked between consecutive epochs: too few
//! satellites, a time gap, and a pseudorange jump on a common satellite.
//! Each estimator has its own machine; [`advance`] is a pure function of the
//! current machine state and the flags.

use std::fmt;

use crate::error::{Error, Result};
use crate::measurements::EpochBatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DiscontinuityFlags {
    pub satellite: bool,
    pub clock: bool,
    pub pseudorange: bool,
}

impl DiscontinuityFlags {
    /// Clock or pseudorange discontinuity.
    pub fn breaks_continuity(&self) -> bool {
        self.clock || self.pseudorange
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub max_gap_s: f64,
    pub max_pseudorange_jump_m: f64,
    /// Consecutive satellite outages the EKF may bridge by prediction.
    pub hold_limit: u32,
    pub min_satellites: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { max_gap_s: 10.0, max_pseudorange_jump_m: 50_000.0, hold_limit: 10, min_satellites: 4 }
    }
}

pub fn detect(prev: Option<&EpochBatch>, cur: &EpochBatch, th: &Thresholds) -> DiscontinuityFlags {
    let satellite = cur.len() < th.min_satellites;
    let Some(prev) = prev else {
        return DiscontinuityFlags { satellite, clock: false, pseudorange: false };
    };
    let gap = (cur.utc_millis - prev.utc_millis) as f64 * 1e-3;
    let clock = gap > th.max_gap_s || gap <= 0.0;
    let mut common = 0;
    let mut jump = false;
    for m in &cur.measurements {
        if let Some(p) = prev.find(m.constellation, m.svid) {
            common += 1;
            if (m.rho_c - p.rho_c).abs() > th.max_pseudorange_jump_m {
                jump = true;
            }
        }
    }
    DiscontinuityFlags { satellite, clock, pseudorange: jump || common == 0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MachineKind {
    Wls,
    Mhe,
    Ekf,
    Rts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Stop,
    WarmUp,
    Run,
    Hold,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Stop => "stop",
            Label::WarmUp => "warmup",
            Label::Run => "run",
            Label::Hold => "hold",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "stop" => Some(Label::Stop),
            "warmup" => Some(Label::WarmUp),
            "run" => Some(Label::Run),
            "hold" => Some(Label::Hold),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    RunWls,
    RunMhe,
    RunEkfUpdate,
    RunEkfHold,
    EmitNone,
    /// RTS: this epoch ends a smoothing segment (smoothed = filtered).
    SegmentBoundary,
    /// RTS: smooth this epoch from the next one.
    RunRts,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::RunWls => "run-wls",
            Action::RunMhe => "run-mhe",
            Action::RunEkfUpdate => "run-ekf-update",
            Action::RunEkfHold => "run-ekf-hold",
            Action::EmitNone => "emit-none",
            Action::SegmentBoundary => "segment-boundary",
            Action::RunRts => "run-rts",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FsmState {
    pub kind: MachineKind,
    pub label: Label,
    /// EKF: consecutive satellite-discontinuity epochs.
    pub counter0: u32,
    /// WLS/EKF: epochs with enough satellites since the last reset.
    pub counter1: u32,
    /// MHE: continuous epochs (time and pseudorange).
    pub counter2: u32,
    /// RTS: consecutive non-empty EKF states, counted backward.
    pub counter3: u32,
    pub flag1: bool,
    pub flag2: bool,
    pub hold_limit: u32,
    /// MHE window size N+1.
    pub window: u32,
}

impl FsmState {
    pub fn new(kind: MachineKind, hold_limit: u32, window: u32) -> Self {
        Self {
            kind,
            label: Label::Stop,
            counter0: 0,
            counter1: 0,
            counter2: 0,
            counter3: 0,
            flag1: false,
            flag2: false,
            hold_limit,
            window: window.max(1),
        }
    }

    fn label_valid(&self) -> bool {
        use Label::*;
        match self.kind {
            MachineKind::Wls | MachineKind::Rts => matches!(self.label, Stop | Run),
            MachineKind::Mhe => matches!(self.label, Stop | WarmUp | Run),
            MachineKind::Ekf => true,
        }
    }

    fn reset(&self) -> Self {
        Self::new(self.kind, self.hold_limit, self.window)
    }
}

/// Steps the WLS, MHE or EKF machine by one epoch.
pub fn advance(fsm: &FsmState, flags: &DiscontinuityFlags) -> Result<(FsmState, Action)> {
    if !fsm.label_valid() {
        return Err(Error::Invariant(format!("{:?} machine in state {}", fsm.kind, fsm.label)));
    }
    match fsm.kind {
        MachineKind::Wls => Ok(advance_wls(fsm, flags)),
        MachineKind::Mhe => Ok(advance_mhe(fsm, flags)),
        MachineKind::Ekf => Ok(advance_ekf(fsm, flags)),
        MachineKind::Rts => Err(Error::Invariant("RTS machine is stepped with advance_rts".into())),
    }
}

fn advance_wls(fsm: &FsmState, flags: &DiscontinuityFlags) -> (FsmState, Action) {
    let mut next = *fsm;
    if flags.satellite {
        next.counter1 = 0;
        next.label = Label::Stop;
        (next, Action::EmitNone)
    } else {
        next.counter1 += 1;
        next.label = Label::Run;
        (next, Action::RunWls)
    }
}

fn advance_mhe(fsm: &FsmState, flags: &DiscontinuityFlags) -> (FsmState, Action) {
    let mut next = *fsm;
    next.counter2 = if flags.breaks_continuity() { 1 } else { fsm.counter2.saturating_add(1) };
    if next.counter2 == 1 {
        // no usable history: single-epoch WLS, if possible
        if flags.satellite {
            next.label = Label::Stop;
            return (next, Action::EmitNone);
        }
        next.label = if next.window <= 1 { Label::Run } else { Label::WarmUp };
        return (next, Action::RunWls);
    }
    next.label = if next.counter2 < next.window { Label::WarmUp } else { Label::Run };
    (next, Action::RunMhe)
}

fn advance_ekf(fsm: &FsmState, flags: &DiscontinuityFlags) -> (FsmState, Action) {
    let mut next = *fsm;
    next.flag1 = flags.breaks_continuity();
    let restart = |mut s: FsmState| {
        s.counter1 = 1;
        s.counter0 = 0;
        s.label = Label::WarmUp;
        (s, Action::RunWls)
    };
    match fsm.label {
        Label::Stop => {
            if flags.satellite {
                (fsm.reset(), Action::EmitNone)
            } else {
                restart(next)
            }
        }
        Label::WarmUp => {
            if flags.satellite {
                (fsm.reset(), Action::EmitNone)
            } else if next.flag1 {
                restart(next)
            } else {
                next.counter1 += 1;
                if next.counter1 <= 2 {
                    (next, Action::RunWls)
                } else {
                    next.label = Label::Run;
                    (next, Action::RunEkfUpdate)
                }
            }
        }
        Label::Run | Label::Hold => {
            if flags.satellite {
                next.counter0 += 1;
                if next.counter0 > next.hold_limit {
                    (fsm.reset(), Action::EmitNone)
                } else {
                    next.label = Label::Hold;
                    (next, Action::RunEkfHold)
                }
            } else if next.flag1 {
                restart(next)
            } else {
                next.counter0 = 0;
                next.counter1 += 1;
                next.label = Label::Run;
                (next, Action::RunEkfUpdate)
            }
        }
    }
}

/// Steps the RTS machine one epoch backward in time.
///
/// `ekf_present` says whether the EKF produced an estimate at this epoch;
/// `next_disconnected` (flag2) whether the following epoch was not propagated
/// from this one (clock/pseudorange discontinuity or a filter restart).
pub fn advance_rts(fsm: &FsmState, ekf_present: bool, next_disconnected: bool) -> Result<(FsmState, Action)> {
    if fsm.kind != MachineKind::Rts || !fsm.label_valid() {
        return Err(Error::Invariant(format!("{:?} machine in state {}", fsm.kind, fsm.label)));
    }
    let mut next = *fsm;
    next.flag2 = next_disconnected;
    if !ekf_present {
        next.counter3 = 0;
        next.label = Label::Stop;
        return Ok((next, Action::EmitNone));
    }
    next.label = Label::Run;
    if next_disconnected || fsm.counter3 == 0 {
        next.counter3 = 1;
        Ok((next, Action::SegmentBoundary))
    } else {
        next.counter3 += 1;
        Ok((next, Action::RunRts))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Constellation;
    use crate::measurements::CorrectedMeasurement;
    use nalgebra::Vector3;

    fn batch(utc: i64, n: usize, offset: f64) -> EpochBatch {
        EpochBatch {
            utc_millis: utc,
            measurements: (0..n)
                .map(|i| CorrectedMeasurement {
                    constellation: Constellation::Gps,
                    svid: i as i32 + 1,
                    rho_c: 2.2e7 + offset,
                    rho_dot_c: 0.0,
                    sigma_rho: 1.0,
                    sigma_rho_dot: 0.1,
                    sat_pos: Vector3::new(2.6e7, 0.0, 0.0),
                    sat_vel: Vector3::zeros(),
                })
                .collect(),
            sample_period: None,
        }
    }

    const SAT: DiscontinuityFlags = DiscontinuityFlags { satellite: true, clock: false, pseudorange: false };
    const CLOCK: DiscontinuityFlags = DiscontinuityFlags { satellite: false, clock: true, pseudorange: false };
    const NONE: DiscontinuityFlags = DiscontinuityFlags { satellite: false, clock: false, pseudorange: false };

    #[test]
    fn detect_examples() {
        let th = Thresholds::default();
        let f = detect(Some(&batch(0, 8, 0.0)), &batch(11_000, 8, 0.0), &th);
        assert!(f.clock && !f.pseudorange && !f.satellite);
        let f = detect(Some(&batch(0, 8, 0.0)), &batch(10_000, 8, 0.0), &th);
        assert!(!f.clock);
        let f = detect(Some(&batch(0, 8, 0.0)), &batch(1000, 8, 60_000.0), &th);
        assert!(f.pseudorange);
        let f = detect(Some(&batch(0, 8, 0.0)), &batch(1000, 3, 0.0), &th);
        assert!(f.satellite && !f.pseudorange);
        let f = detect(None, &batch(0, 8, 0.0), &th);
        assert_eq!(f, NONE);
    }

    #[test]
    fn no_common_satellite_is_a_jump() {
        let mut cur = batch(1000, 5, 0.0);
        for m in cur.measurements.iter_mut() {
            m.svid += 20;
        }
        assert!(detect(Some(&batch(0, 5, 0.0)), &cur, &Thresholds::default()).pseudorange);
    }

    #[test]
    fn wls_machine() {
        let s = FsmState::new(MachineKind::Wls, 10, 1);
        let (s, a) = advance(&s, &NONE).unwrap();
        assert_eq!((s.label, s.counter1, a), (Label::Run, 1, Action::RunWls));
        let (s, a) = advance(&s, &SAT).unwrap();
        assert_eq!((s.label, s.counter1, a), (Label::Stop, 0, Action::EmitNone));
    }

    #[test]
    fn ekf_hold_then_stop() {
        let mut s = FsmState::new(MachineKind::Ekf, 10, 1);
        s.label = Label::Run;
        s.counter0 = 9;
        let (s, a) = advance(&s, &SAT).unwrap();
        assert_eq!((s.label, s.counter0, a), (Label::Hold, 10, Action::RunEkfHold));
        let (s, a) = advance(&s, &SAT).unwrap();
        assert_eq!((s.label, a), (Label::Stop, Action::EmitNone));
        assert_eq!(s.counter0, 0);
    }

    #[test]
    fn ekf_warm_up_sequence() {
        let s = FsmState::new(MachineKind::Ekf, 10, 1);
        let (s, a1) = advance(&s, &NONE).unwrap();
        let (s, a2) = advance(&s, &NONE).unwrap();
        let (s, a3) = advance(&s, &NONE).unwrap();
        assert_eq!((a1, a2, a3), (Action::RunWls, Action::RunWls, Action::RunEkfUpdate));
        assert_eq!(s.label, Label::Run);
        let (s, a) = advance(&s, &CLOCK).unwrap();
        assert_eq!((s.label, s.counter1, a), (Label::WarmUp, 1, Action::RunWls));
        assert!(s.flag1);
    }

    #[test]
    fn mhe_fallback_on_gap() {
        let mut s = FsmState::new(MachineKind::Mhe, 10, 10);
        s.label = Label::Run;
        s.counter2 = 15;
        let (s, a) = advance(&s, &CLOCK).unwrap();
        assert_eq!((s.counter2, a, s.label), (1, Action::RunWls, Label::WarmUp));
        let (s, a) = advance(&s, &NONE).unwrap();
        assert_eq!((s.counter2, a, s.label), (2, Action::RunMhe, Label::WarmUp));
    }

    #[test]
    fn mhe_reaches_run_when_window_full() {
        let mut s = FsmState::new(MachineKind::Mhe, 10, 3);
        let mut labels = vec![];
        for _ in 0..4 {
            let (n, _) = advance(&s, &NONE).unwrap();
            labels.push(n.label);
            s = n;
        }
        assert_eq!(labels, vec![Label::WarmUp, Label::WarmUp, Label::Run, Label::Run]);
    }

    #[test]
    fn rts_machine() {
        let s = FsmState::new(MachineKind::Rts, 10, 1);
        let (s, a) = advance_rts(&s, true, true).unwrap();
        assert_eq!((a, s.counter3), (Action::SegmentBoundary, 1));
        let (s, a) = advance_rts(&s, true, false).unwrap();
        assert_eq!((a, s.counter3), (Action::RunRts, 2));
        let (s, a) = advance_rts(&s, false, false).unwrap();
        assert_eq!((a, s.counter3, s.label), (Action::EmitNone, 0, Label::Stop));
        let (_, a) = advance_rts(&s, true, false).unwrap();
        assert_eq!(a, Action::SegmentBoundary);
    }

    #[test]
    fn invalid_combinations_rejected() {
        let mut s = FsmState::new(MachineKind::Wls, 10, 1);
        s.label = Label::Hold;
        assert!(matches!(advance(&s, &NONE), Err(Error::Invariant(_))));
        let s = FsmState::new(MachineKind::Rts, 10, 1);
        assert!(advance(&s, &NONE).is_err());
        let s = FsmState::new(MachineKind::Ekf, 10, 1);
        assert!(advance_rts(&s, true, true).is_err());
    }

    #[test]
    fn ekf_never_holds_past_limit() {
        let mut s = FsmState::new(MachineKind::Ekf, 10, 1);
        for _ in 0..3 {
            s = advance(&s, &NONE).unwrap().0;
        }
        let mut run = 0;
        let mut max_run = 0;
        for _ in 0..40 {
            let (n, a) = advance(&s, &SAT).unwrap();
            if a == Action::RunEkfHold {
                run += 1;
                max_run = max_run.max(run);
            } else {
                run = 0;
            }
            s = n;
        }
        assert_eq!(max_run, 10);
    }
}
