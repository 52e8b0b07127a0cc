//! Explicit decay/gain envelopes implied by a dwell-time certificate, and
//! trajectory-level verification of the stability and estimation
//! inequalities.
//!
//! The central quantity is the switching exponent over `]s, t]`,
//!
//! ```text
//! Xi(s,t) = -lambda_s * T_S(s,t) + lambda_u * T_U(s,t) + ln(mu) * N(s,t),
//! ```
//!
//! whose certificate-level bound `Xi(0,t) <= decay_offset - decay_rate * t`
//! induces every envelope constant below.

use serde::Serialize;
use thiserror::Error;

use crate::conditions::{dwell_condition_value, DwellCertificate, EstimatorParams};
use crate::family::{LyapunovData, StabilityClass, SystemFamily};
use crate::signals::SwitchingSignal;
use crate::sim::Trajectory;

#[derive(Debug, Error)]
pub enum EnvelopeError {
    #[error("certificate is infeasible (condition value {0} >= 0)")]
    Infeasible(f64),
    #[error("condition error: {0}")]
    Condition(#[from] crate::conditions::ConditionError),
    #[error("signal error: {0}")]
    Signal(#[from] crate::signals::SignalError),
    #[error("trajectory lacks the {0} channel required by this check")]
    MissingChannel(&'static str),
    #[error("inverse gain did not bracket the target {0}")]
    InverseUnbracketed(f64),
}

/// Exact switching exponent over `]s, t]`, computed from the signal.
/// Activation classes absent from the window contribute nothing.
pub fn switching_exponent(
    signal: &SwitchingSignal,
    family: &SystemFamily,
    s: f64,
    t: f64,
) -> Result<f64, EnvelopeError> {
    if t <= s {
        return Ok(0.0);
    }
    let c = signal.counts(family, s, t)?;
    let l = &family.lyapunov;
    Ok(-l.lambda_s * c.duration_stable + l.lambda_u * c.duration_unstable + l.mu.ln() * c.n as f64)
}

/// The transient factor `exp(Xi(0,t))`.
pub fn transient_factor(
    signal: &SwitchingSignal,
    family: &SystemFamily,
    t: f64,
) -> Result<f64, EnvelopeError> {
    Ok(switching_exponent(signal, family, 0.0, t)?.exp())
}

/// Exact supply-accumulation sum at time `t`: over every dwell `[a_i, b_i]`
/// of the signal clipped at `t` (with the final `b = t`),
///
/// ```text
/// stable dwell:    exp(Xi(b,t)) * (1 - exp(-lambda_s (b-a))) / lambda_s
/// unstable dwell:  exp(Xi(b,t)) * (exp( lambda_u (b-a)) - 1) / lambda_u
/// ```
///
/// summed term by term. `mu_corrected` additionally multiplies each dwell
/// that closes with an actual switch by `mu` (the comparison jump applies to
/// the input accumulated before the switch); the plain form is the one the
/// uniform bound [`Envelope::supply_gain`] dominates.
pub fn supply_integral(
    signal: &SwitchingSignal,
    family: &SystemFamily,
    t: f64,
    mu_corrected: bool,
) -> Result<f64, EnvelopeError> {
    let l = &family.lyapunov;
    let mut total = 0.0;
    let entries = signal.entries();
    for (i, (tau, idx)) in entries.iter().enumerate() {
        if *tau >= t {
            break;
        }
        let next_switch = entries.get(i + 1).map(|(next, _)| *next);
        let seg_end = next_switch.map_or(t, |next| next.min(t));
        let gap = seg_end - *tau;
        if gap <= 0.0 {
            continue;
        }
        let suffix = switching_exponent(signal, family, seg_end, t)?.exp();
        let jump = if mu_corrected && next_switch.map_or(false, |next| next <= t) {
            l.mu
        } else {
            1.0
        };
        let term = match family.class(*idx) {
            StabilityClass::Stable => (1.0 - (-l.lambda_s * gap).exp()) / l.lambda_s,
            StabilityClass::Unstable => ((l.lambda_u * gap).exp() - 1.0) / l.lambda_u,
        };
        total += jump * suffix * term;
    }
    Ok(total)
}

/// Envelope constants and functions induced by a feasible certificate.
#[derive(Debug, Clone)]
pub struct Envelope {
    /// Offset of the exponential transient bound (`lambda_s * stable_dwell_min
    /// + lambda_u * unstable_dwell_max`, the unstable term dropped for
    /// all-stable families).
    pub decay_offset: f64,
    /// Rate of the transient bound: minus the certificate condition value.
    pub decay_rate: f64,
    /// Uniform bound on the supply-accumulation sum.
    pub supply_gain: f64,
    /// Estimation-side constants, present when built with estimator params.
    pub estimation: Option<EstimationEnvelope>,
    lyapunov: LyapunovData,
}

/// Constants for the state-norm estimation envelope.
#[derive(Debug, Clone, Serialize)]
pub struct EstimationEnvelope {
    /// Offset of the rate-gap transient (`rate-bound slack * unstable dwell cap`).
    pub comparison_offset: f64,
    /// Rate of the rate-gap transient: minus the rate-gap condition value.
    pub comparison_rate: f64,
    /// Uniform bound on the comparison sums.
    pub supply_comparison_bound: f64,
    /// `(mu - 1) * supply_comparison_bound`.
    pub comparison_gap: f64,
    /// Ratio bound between the tracking and schedule-driven estimators,
    /// `exp((decay+growth rates) * (stable_dwell_min * cap / (2 min) + cap))`.
    pub ratio_bound: f64,
    /// Variant of the ratio bound using the ISS phase in place of the stable
    /// dwell minimum. Diagnostic only; every check uses `ratio_bound`.
    pub ratio_bound_tilde_variant: f64,
    pub params: EstimatorParams,
}

impl Envelope {
    /// Transient envelope `beta(r, s) = alpha_upper(r) * exp(offset - rate*s)`.
    pub fn beta(&self, r: f64, s: f64) -> f64 {
        self.lyapunov.alpha_upper(r) * (self.decay_offset - self.decay_rate * s).exp()
    }

    /// Input gain `chi1(r) = gamma1(r) * supply_gain`.
    pub fn chi1(&self, r: f64) -> f64 {
        self.lyapunov.gamma1.eval(r) * self.supply_gain
    }

    /// Output gain `chi2(r) = gamma2(r) * supply_gain`.
    pub fn chi2(&self, r: f64) -> f64 {
        self.lyapunov.gamma2.eval(r) * self.supply_gain
    }

    pub fn alpha_lower(&self, r: f64) -> f64 {
        self.lyapunov.alpha_lower.eval(r)
    }

    pub fn alpha_upper(&self, r: f64) -> f64 {
        self.lyapunov.alpha_upper(r)
    }

    /// Inverse of the lower sandwich gain, by bisection with bracket
    /// doubling (tolerance 1e-10 on the argument).
    pub fn alpha_lower_inv(&self, u: f64) -> Result<f64, EnvelopeError> {
        if u <= 0.0 {
            return Ok(0.0);
        }
        let g = |r: f64| self.lyapunov.alpha_lower.eval(r);
        let mut hi = 1.0f64;
        let mut guard = 0;
        while g(hi) < u {
            hi *= 2.0;
            guard += 1;
            if guard > 2000 || !hi.is_finite() {
                return Err(EnvelopeError::InverseUnbracketed(u));
            }
        }
        let mut lo = 0.0f64;
        for _ in 0..200 {
            if hi - lo <= 1e-10 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if g(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Estimation transient `alpha_lower^{-1}(exp(offset - rate*t) * alpha_upper(r))`.
    pub fn norm_decay(&self, r: f64, t: f64) -> Result<f64, EnvelopeError> {
        let inner = (self.decay_offset - self.decay_rate * t).exp() * self.lyapunov.alpha_upper(r);
        self.alpha_lower_inv(inner)
    }

    /// Estimation gain `alpha_lower^{-1}((1 + comparison_gap) * r)`.
    pub fn norm_gain(&self, r: f64) -> Result<f64, EnvelopeError> {
        let gap = self
            .estimation
            .as_ref()
            .map(|e| e.comparison_gap)
            .unwrap_or(0.0);
        self.alpha_lower_inv((1.0 + gap) * r)
    }
}

/// Builds the stability envelope for a feasible certificate. The
/// certificate's condition value is recomputed from the family data.
pub fn build_ioss_envelope(
    family: &SystemFamily,
    cert: &DwellCertificate,
) -> Result<Envelope, EnvelopeError> {
    let l = &family.lyapunov;
    let value = dwell_condition_value(
        l.lambda_s,
        l.lambda_u,
        l.mu,
        cert.dwell_min,
        cert.dwell_max,
        cert.stable_dwell_min,
        cert.unstable_dwell_max,
    )?;
    if !(value < 0.0) {
        return Err(EnvelopeError::Infeasible(value));
    }
    let has_unstable = family.has_unstable();
    let decay_offset = l.lambda_s * cert.stable_dwell_min
        + if has_unstable {
            l.lambda_u * cert.unstable_dwell_max
        } else {
            0.0
        };
    let decay_rate = -value;
    let geom = 1.0 / ((decay_rate * cert.dwell_min).exp() - 1.0);
    let supply_gain = decay_offset.exp()
        * ((1.0 / l.lambda_s) * geom
            + if has_unstable {
                (1.0 / l.lambda_u) * (1.0 + geom)
            } else {
                0.0
            });
    Ok(Envelope {
        decay_offset,
        decay_rate,
        supply_gain,
        estimation: None,
        lyapunov: l.clone(),
    })
}

/// Builds the estimation envelope on top of the stability one. `params`
/// must have been accepted by the estimator condition check.
pub fn build_estimation_envelope(
    family: &SystemFamily,
    cert: &DwellCertificate,
    params: &EstimatorParams,
) -> Result<Envelope, EnvelopeError> {
    let mut env = build_ioss_envelope(family, cert)?;
    let l = &family.lyapunov;
    let rate_slack = l.lambda_s - params.decay_rate + l.lambda_u - params.growth_rate;
    let comparison_offset = rate_slack * cert.unstable_dwell_max;
    let comparison_rate = -params.rate_gap_value;
    if !(comparison_rate > 0.0) {
        return Err(EnvelopeError::Infeasible(params.rate_gap_value));
    }
    let geom = 1.0 / ((comparison_rate * cert.dwell_min).exp() - 1.0);
    let supply_comparison_bound = comparison_offset.exp() * (1.0 + geom);
    let comparison_gap = (l.mu - 1.0) * supply_comparison_bound;
    let rate_sum = params.decay_rate + params.growth_rate;
    let ratio_bound = (rate_sum
        * (cert.stable_dwell_min * cert.unstable_dwell_max / (2.0 * cert.dwell_min)
            + cert.unstable_dwell_max))
        .exp();
    let ratio_bound_tilde_variant = (rate_sum
        * (params.iss_phase * cert.unstable_dwell_max / (2.0 * cert.dwell_min)
            + cert.unstable_dwell_max))
        .exp();
    env.estimation = Some(EstimationEnvelope {
        comparison_offset,
        comparison_rate,
        supply_comparison_bound,
        comparison_gap,
        ratio_bound,
        ratio_bound_tilde_variant,
        params: params.clone(),
    });
    Ok(env)
}

/// Outcome of a pointwise inequality check along a trajectory.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SlackReport {
    /// Minimum of (right side - left side) over all grid nodes.
    pub min_slack: f64,
    /// Time at which the minimum is attained.
    pub argmin_time: f64,
    pub nodes_checked: usize,
}

impl SlackReport {
    pub fn pass(&self) -> bool {
        self.min_slack >= 0.0
    }

    fn from_slacks(slacks: impl Iterator<Item = (f64, f64)>) -> SlackReport {
        let mut min_slack = f64::INFINITY;
        let mut argmin_time = 0.0;
        let mut nodes = 0;
        for (t, s) in slacks {
            nodes += 1;
            if s < min_slack {
                min_slack = s;
                argmin_time = t;
            }
        }
        SlackReport {
            min_slack,
            argmin_time,
            nodes_checked: nodes,
        }
    }
}

/// Verifies the stability inequality along a trajectory at every node:
///
/// ```text
/// alpha_lower(|x(t)|) <= beta(|x0|, t) + chi1(sup|v|) + chi2(sup|y|)
/// ```
///
/// with running (discrete-maximum) sup norms.
pub fn check_ioss_inequality(
    traj: &Trajectory,
    family: &SystemFamily,
    env: &Envelope,
) -> SlackReport {
    let x0 = traj.state_norm(0);
    let mut sup_v: f64 = 0.0;
    let mut sup_y: f64 = 0.0;
    let l = &family.lyapunov;
    SlackReport::from_slacks((0..traj.n_nodes()).map(|k| {
        sup_v = sup_v.max(traj.input_norm(k));
        sup_y = sup_y.max(traj.output_norm(k));
        let lhs = l.alpha_lower.eval(traj.state_norm(k));
        let rhs = env.beta(x0, traj.times[k]) + env.chi1(sup_v) + env.chi2(sup_y);
        (traj.times[k], rhs - lhs)
    }))
}

/// Pointwise stability curve (t, left side, right side) for export.
pub fn ioss_curve(traj: &Trajectory, family: &SystemFamily, env: &Envelope) -> Vec<(f64, f64, f64)> {
    let x0 = traj.state_norm(0);
    let mut sup_v: f64 = 0.0;
    let mut sup_y: f64 = 0.0;
    let l = &family.lyapunov;
    (0..traj.n_nodes())
        .map(|k| {
            sup_v = sup_v.max(traj.input_norm(k));
            sup_y = sup_y.max(traj.output_norm(k));
            let lhs = l.alpha_lower.eval(traj.state_norm(k));
            let rhs = env.beta(x0, traj.times[k]) + env.chi1(sup_v) + env.chi2(sup_y);
            (traj.times[k], lhs, rhs)
        })
        .collect()
}

/// Zero-input specialization: the state envelope alone must dominate,
/// `alpha_lower(|x(t)|) <= beta(|x0|, t)`.
pub fn check_gas_decay(traj: &Trajectory, family: &SystemFamily, env: &Envelope) -> SlackReport {
    let x0 = traj.state_norm(0);
    let l = &family.lyapunov;
    SlackReport::from_slacks((0..traj.n_nodes()).map(|k| {
        let lhs = l.alpha_lower.eval(traj.state_norm(k));
        (traj.times[k], env.beta(x0, traj.times[k]) - lhs)
    }))
}

/// Results of the three estimation-bound checks.
#[derive(Debug, Clone, Serialize)]
pub struct EstimatorBoundsReport {
    /// `|x(t)| <= norm_decay(|x0|+z0, t) + norm_gain(ratio_bound * z(t))`.
    pub schedule_bound: SlackReport,
    /// `|x(t)| <= norm_decay(|x0|+w0, t) + norm_gain(w(t))`, when w present.
    pub reference_bound: Option<SlackReport>,
    /// `w(t) <= ratio_bound * z(t)`, when w present and `w0 <= z0`.
    pub ratio_check: Option<SlackReport>,
}

impl EstimatorBoundsReport {
    pub fn pass(&self) -> bool {
        self.schedule_bound.pass()
            && self.reference_bound.map_or(true, |r| r.pass())
            && self.ratio_check.map_or(true, |r| r.pass())
    }
}

/// Runs the estimation-bound checks on a co-simulated trajectory carrying
/// the scalar estimator channel(s).
pub fn check_estimator_bounds(
    traj: &Trajectory,
    env: &Envelope,
) -> Result<EstimatorBoundsReport, EnvelopeError> {
    let est = env
        .estimation
        .as_ref()
        .ok_or(EnvelopeError::MissingChannel("estimation envelope"))?;
    let z = traj
        .estimate
        .as_ref()
        .ok_or(EnvelopeError::MissingChannel("estimate (z)"))?;
    let x0 = traj.state_norm(0);
    let z0 = z[0];

    let mut schedule = Vec::with_capacity(traj.n_nodes());
    for k in 0..traj.n_nodes() {
        let rhs = env.norm_decay(x0 + z0.abs(), traj.times[k])?
            + env.norm_gain(est.ratio_bound * z[k])?;
        schedule.push((traj.times[k], rhs - traj.state_norm(k)));
    }
    let schedule_bound = SlackReport::from_slacks(schedule.into_iter());

    let mut reference_bound = None;
    let mut ratio_check = None;
    if let Some(w) = traj.reference_estimate.as_ref() {
        let w0 = w[0];
        let mut reference = Vec::with_capacity(traj.n_nodes());
        for k in 0..traj.n_nodes() {
            let rhs = env.norm_decay(x0 + w0.abs(), traj.times[k])? + env.norm_gain(w[k])?;
            reference.push((traj.times[k], rhs - traj.state_norm(k)));
        }
        reference_bound = Some(SlackReport::from_slacks(reference.into_iter()));
        if w0 <= z0 {
            ratio_check = Some(SlackReport::from_slacks(
                (0..traj.n_nodes()).map(|k| (traj.times[k], est.ratio_bound * z[k] - w[k])),
            ));
        }
    }

    Ok(EstimatorBoundsReport {
        schedule_bound,
        reference_bound,
        ratio_check,
    })
}

/// Verifies the estimator's own decay/gain bound along a run:
///
/// ```text
/// z(t) <= exp(-cbar t) z0 + supply_gain_z * sup_{s<=t} gain(s)
/// ```
///
/// with `cbar` minus the schedule average-decay value and `supply_gain_z`
/// the schedule analogue of the supply bound (comparison factor 1, the
/// estimator's own rates, the schedule phases as the dwell pair). The bound
/// is tight at schedule-period boundaries when the supply vanishes, so an
/// absolute headroom of 1e-9 absorbs integrator roundoff.
pub fn check_estimator_iss(
    traj: &Trajectory,
    family: &SystemFamily,
    params: &EstimatorParams,
) -> Result<SlackReport, EnvelopeError> {
    let z = traj
        .estimate
        .as_ref()
        .ok_or(EnvelopeError::MissingChannel("estimate (z)"))?;
    let cbar = -params.schedule_decay_value;
    if !(cbar > 0.0) {
        return Err(EnvelopeError::Infeasible(params.schedule_decay_value));
    }
    let offset = params.decay_rate * params.iss_phase + params.growth_rate * params.growth_phase;
    let min_phase = params.iss_phase.min(params.growth_phase);
    let geom = 1.0 / ((cbar * min_phase).exp() - 1.0);
    let supply_gain_z =
        offset.exp() * ((1.0 / params.decay_rate) * geom + (1.0 / params.growth_rate) * (1.0 + geom));

    let z0 = z[0];
    let mut sup_gain: f64 = 0.0;
    Ok(SlackReport::from_slacks((0..traj.n_nodes()).map(|k| {
        sup_gain = sup_gain.max(family.gamma_bar(traj.input_norm(k), traj.output_norm(k)));
        let bound = (-cbar * traj.times[k]).exp() * z0 + supply_gain_z * sup_gain + 1e-9;
        (traj.times[k], bound - z[k])
    })))
}
