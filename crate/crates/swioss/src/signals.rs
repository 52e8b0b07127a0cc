//! Switching signals: right-continuous piecewise-constant maps from time to
//! subsystem index, their admissibility/stabilizing validation, switch
//! counting and activation durations, and seeded random generation inside
//! the stabilizing class.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conditions::DwellCertificate;
use crate::family::{StabilityClass, SystemFamily};

/// Comparisons against dwell windows tolerate this much float noise.
const DWELL_TOL: f64 = 1e-9;
/// Generated switching instants live on this grid so that the default
/// integration step divides every gap exactly.
pub const DWELL_GRID: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("signal must contain at least one entry")]
    Empty,
    #[error("first entry must be at time 0, got {0}")]
    FirstEntryNotZero(f64),
    #[error("switching instants must be strictly increasing at entry {index}")]
    NotIncreasing { index: usize },
    #[error("horizon {horizon} must exceed the last switching instant {last}")]
    HorizonTooSmall { horizon: f64, last: f64 },
    #[error("subsystem index {0} must be >= 1")]
    BadIndex(usize),
    #[error("time {t} outside the signal domain [0, {horizon}]")]
    OutOfDomain { t: f64, horizon: f64 },
    #[error("degenerate interval: need s < t, got s = {s}, t = {t}")]
    DegenerateInterval { s: f64, t: f64 },
    #[error("interval [{s}, {t}] escapes the signal domain [0, {horizon}]")]
    IntervalOutOfDomain { s: f64, t: f64, horizon: f64 },
    #[error("signal generation is stuck at subsystem {index}: no admissible successor")]
    DeadEnd { index: usize },
    #[error("certificate is infeasible; cannot generate stabilizing signals")]
    InfeasibleCertificate,
    #[error("horizon must be positive, got {0}")]
    NonPositiveHorizon(f64),
}

/// A switching signal: entries `(tau_i, index_i)` with `tau_0 = 0`, strictly
/// increasing instants, and right-continuous semantics — the signal equals
/// `index_i` on `[tau_i, tau_{i+1})` and on `[tau_last, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SignalRepr")]
pub struct SwitchingSignal {
    entries: Vec<(f64, usize)>,
    horizon: f64,
}

/// Wire shape; deserialization re-validates the invariants.
#[derive(Deserialize)]
struct SignalRepr {
    entries: Vec<(f64, usize)>,
    horizon: f64,
}

impl TryFrom<SignalRepr> for SwitchingSignal {
    type Error = SignalError;

    fn try_from(repr: SignalRepr) -> Result<Self, SignalError> {
        SwitchingSignal::new(repr.entries, repr.horizon)
    }
}

impl SwitchingSignal {
    pub fn new(entries: Vec<(f64, usize)>, horizon: f64) -> Result<Self, SignalError> {
        if entries.is_empty() {
            return Err(SignalError::Empty);
        }
        if entries[0].0 != 0.0 {
            return Err(SignalError::FirstEntryNotZero(entries[0].0));
        }
        for (k, win) in entries.windows(2).enumerate() {
            if !(win[1].0 > win[0].0) {
                return Err(SignalError::NotIncreasing { index: k + 1 });
            }
        }
        for (_, idx) in &entries {
            if *idx < 1 {
                return Err(SignalError::BadIndex(*idx));
            }
        }
        let last = entries.last().unwrap().0;
        if !(horizon > last) {
            return Err(SignalError::HorizonTooSmall { horizon, last });
        }
        Ok(SwitchingSignal { entries, horizon })
    }

    pub fn entries(&self) -> &[(f64, usize)] {
        &self.entries
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Switching instants, excluding the initial activation at time 0.
    pub fn switch_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().skip(1).map(|(tau, _)| *tau)
    }

    pub fn n_switches(&self) -> usize {
        self.entries.len() - 1
    }

    /// σ(t) under right-continuous semantics.
    pub fn evaluate(&self, t: f64) -> Result<usize, SignalError> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(SignalError::OutOfDomain {
                t,
                horizon: self.horizon,
            });
        }
        Ok(self.entries[self.segment_at(t)].1)
    }

    /// Index into `entries` of the segment containing `t` (domain checked by
    /// callers).
    fn segment_at(&self, t: f64) -> usize {
        match self
            .entries
            .binary_search_by(|(tau, _)| tau.partial_cmp(&t).unwrap())
        {
            Ok(k) => k,
            Err(0) => 0,
            Err(k) => k - 1,
        }
    }

    /// Switch counts and per-class activation durations over the half-open
    /// interval `]s, t]`.
    pub fn counts(
        &self,
        family: &SystemFamily,
        s: f64,
        t: f64,
    ) -> Result<SwitchCounts, SignalError> {
        if !(s < t) {
            return Err(SignalError::DegenerateInterval { s, t });
        }
        if s < 0.0 || t > self.horizon {
            return Err(SignalError::IntervalOutOfDomain {
                s,
                t,
                horizon: self.horizon,
            });
        }

        let mut counts = SwitchCounts::default();
        for (tau, idx) in self.entries.iter().skip(1) {
            if *tau > s && *tau <= t {
                counts.n += 1;
                match family.class(*idx) {
                    StabilityClass::Stable => counts.n_stable += 1,
                    StabilityClass::Unstable => counts.n_unstable += 1,
                }
            }
        }
        for (k, (tau, idx)) in self.entries.iter().enumerate() {
            let seg_end = self
                .entries
                .get(k + 1)
                .map(|(next, _)| *next)
                .unwrap_or(self.horizon);
            let lo = tau.max(s);
            let hi = seg_end.min(t);
            if hi > lo {
                match family.class(*idx) {
                    StabilityClass::Stable => counts.duration_stable += hi - lo,
                    StabilityClass::Unstable => counts.duration_unstable += hi - lo,
                }
            }
        }
        Ok(counts)
    }
}

/// Switch counts on `]s, t]`: total switches, switches activating a stable /
/// unstable subsystem, and per-class activation durations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SwitchCounts {
    pub n: usize,
    pub n_stable: usize,
    pub n_unstable: usize,
    pub duration_stable: f64,
    pub duration_unstable: f64,
}

/// One validation finding: the entry it refers to and the reason.
#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    /// Index into the signal's entry list.
    pub entry: usize,
    pub reason: String,
}

/// Report-style validation result.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, entry: usize, reason: impl Into<String>) {
        self.violations.push(Violation {
            entry,
            reason: reason.into(),
        });
    }
}

/// Checks membership in the admissible class: consecutive activations follow
/// the switch graph and every inter-switch gap lies in the dwell window.
///
/// The final partial dwell (last switch to horizon) is exempt from the
/// minimum-dwell check; the maximum-dwell cap applies to it only when the
/// signal switches at all (a switch-free signal is vacuously admissible).
pub fn validate_admissible(signal: &SwitchingSignal, family: &SystemFamily) -> ValidationReport {
    let mut report = ValidationReport::default();
    let entries = signal.entries();

    for (k, (_, idx)) in entries.iter().enumerate() {
        if !family.contains_index(*idx) {
            report.push(k, format!("unknown subsystem index {idx}"));
        }
    }
    if !report.pass() {
        return report;
    }

    for k in 0..entries.len() - 1 {
        let (tau_a, a) = entries[k];
        let (tau_b, b) = entries[k + 1];
        if !family.graph.contains(a, b) {
            report.push(k + 1, format!("edge not allowed: ({a}, {b})"));
        }
        let gap = tau_b - tau_a;
        if gap < family.dwell_min - DWELL_TOL {
            report.push(k + 1, format!("dwell too short at {k}: {gap} < {}", family.dwell_min));
        }
        if gap > family.dwell_max + DWELL_TOL {
            report.push(k + 1, format!("dwell too long at {k}: {gap} > {}", family.dwell_max));
        }
    }

    if entries.len() > 1 {
        let last = entries.last().unwrap().0;
        let tail = signal.horizon() - last;
        if tail > family.dwell_max + DWELL_TOL {
            report.push(
                entries.len() - 1,
                format!("final partial dwell {tail} exceeds the maximum dwell {}", family.dwell_max),
            );
        }
    }
    report
}

/// Checks membership in the stabilizing class: admissible, no two
/// consecutive unstable activations, stable dwells in
/// `[stable_dwell_min, dwell_max]` and unstable dwells in
/// `[dwell_min, unstable_dwell_max]`. The final partial dwell is exempt from
/// the minimum checks but subject to the class maximum when the signal
/// switches at all.
pub fn validate_stabilizing(
    signal: &SwitchingSignal,
    family: &SystemFamily,
    cert: &DwellCertificate,
) -> ValidationReport {
    let mut report = validate_admissible(signal, family);
    if !report.pass() {
        return report;
    }
    let entries = signal.entries();

    for k in 0..entries.len() - 1 {
        let (tau_a, a) = entries[k];
        let (tau_b, b) = entries[k + 1];
        let both_unstable = family.class(a) == StabilityClass::Unstable
            && family.class(b) == StabilityClass::Unstable;
        if both_unstable {
            report.push(k + 1, format!("consecutive unstable activations: {a} then {b}"));
        }
        let gap = tau_b - tau_a;
        match family.class(a) {
            StabilityClass::Stable => {
                if gap < cert.stable_dwell_min - DWELL_TOL {
                    report.push(
                        k + 1,
                        format!("stable dwell too short at {k}: {gap} < {}", cert.stable_dwell_min),
                    );
                }
            }
            StabilityClass::Unstable => {
                if gap > cert.unstable_dwell_max + DWELL_TOL {
                    report.push(
                        k + 1,
                        format!("unstable dwell too long at {k}: {gap} > {}", cert.unstable_dwell_max),
                    );
                }
            }
        }
    }

    if entries.len() > 1 {
        let (last_tau, last_idx) = *entries.last().unwrap();
        let tail = signal.horizon() - last_tau;
        let cap = match family.class(last_idx) {
            StabilityClass::Stable => family.dwell_max,
            StabilityClass::Unstable => cert.unstable_dwell_max,
        };
        if tail > cap + DWELL_TOL {
            report.push(
                entries.len() - 1,
                format!("final partial dwell {tail} exceeds the class maximum {cap}"),
            );
        }
    }
    report
}

/// Generates a random member of the stabilizing class, deterministic in
/// `seed`. The initial index is uniform over the family; each successor is
/// uniform over switch-graph out-edges that avoid consecutive unstable
/// activations; each dwell is uniform (on a 1e-3 grid) over the class dwell
/// window; the final dwell runs to the horizon.
pub fn generate_signal(
    family: &SystemFamily,
    cert: &DwellCertificate,
    horizon: f64,
    seed: u64,
) -> Result<SwitchingSignal, SignalError> {
    if !(horizon > 0.0) {
        return Err(SignalError::NonPositiveHorizon(horizon));
    }
    if !cert.is_feasible() {
        return Err(SignalError::InfeasibleCertificate);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = family.n();
    let mut current = rng.gen_range(1..=n);
    let mut entries = vec![(0.0, current)];
    // Switching instants accumulate in integer grid units so every gap is an
    // exact grid multiple.
    let mut tau_units: u64 = 0;

    loop {
        let (lo, hi) = match family.class(current) {
            StabilityClass::Stable => cert.stable_window(),
            StabilityClass::Unstable => cert.unstable_window(),
        };
        let lo_units = ((lo / DWELL_GRID) - DWELL_TOL).ceil() as u64;
        let hi_units = ((hi / DWELL_GRID) + DWELL_TOL).floor() as u64;
        let dwell_units = rng.gen_range(lo_units..=hi_units.max(lo_units));
        tau_units += dwell_units;
        let tau = tau_units as f64 * DWELL_GRID;
        if tau >= horizon - DWELL_TOL {
            break;
        }
        if n == 1 {
            break; // constant signal; nothing to switch to
        }

        let successors: Vec<usize> = family
            .graph
            .out_neighbors(current)
            .filter(|q| {
                !(family.class(current) == StabilityClass::Unstable
                    && family.class(*q) == StabilityClass::Unstable)
            })
            .collect();
        if successors.is_empty() {
            return Err(SignalError::DeadEnd { index: current });
        }
        current = successors[rng.gen_range(0..successors.len())];
        entries.push((tau, current));
    }

    SwitchingSignal::new(entries, horizon)
}
