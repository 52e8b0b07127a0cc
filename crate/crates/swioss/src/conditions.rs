//! Scalar feasibility conditions: the main dwell-time stability condition,
//! its necessary and sufficient companions, and the parameter conditions for
//! the schedule-driven state-norm estimator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::family::SystemFamily;

#[derive(Debug, Error)]
pub enum ConditionError {
    #[error("domain violation: {detail}")]
    Domain { detail: String },
    #[error("grid resolution must be at least 2, got {0}")]
    GridTooSmall(usize),
    #[error("certificate is infeasible (condition value {0} >= 0)")]
    InfeasibleCertificate(f64),
}

/// A dwell-time certificate: the admissible window, the tightened per-class
/// dwell bounds, and the value of the stability condition at that choice.
/// Feasible iff `condition_value < 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DwellCertificate {
    /// Admissible minimum dwell time on every subsystem.
    pub dwell_min: f64,
    /// Admissible maximum dwell time on every subsystem.
    pub dwell_max: f64,
    /// Tightened minimum dwell on stable subsystems, in [dwell_min, dwell_max].
    pub stable_dwell_min: f64,
    /// Tightened maximum dwell on unstable subsystems, in [dwell_min, dwell_max].
    pub unstable_dwell_max: f64,
    /// Value of the dwell-time stability condition at the chosen pair.
    pub condition_value: f64,
    /// Which of the four sufficient conditions hold for the window.
    pub sufficient: SufficientConditions,
}

impl DwellCertificate {
    /// Evaluates the stability condition at a chosen dwell pair and records
    /// the sufficient-condition diagnostics.
    pub fn evaluate(
        lambda_s: f64,
        lambda_u: f64,
        mu: f64,
        dwell_min: f64,
        dwell_max: f64,
        stable_dwell_min: f64,
        unstable_dwell_max: f64,
    ) -> Result<Self, ConditionError> {
        if !(stable_dwell_min <= dwell_max) {
            return Err(ConditionError::Domain {
                detail: format!("stable_dwell_min {stable_dwell_min} > dwell_max {dwell_max}"),
            });
        }
        if !(dwell_min <= unstable_dwell_max) {
            return Err(ConditionError::Domain {
                detail: format!("unstable_dwell_max {unstable_dwell_max} < dwell_min {dwell_min}"),
            });
        }
        let condition_value = dwell_condition_value(
            lambda_s,
            lambda_u,
            mu,
            dwell_min,
            dwell_max,
            stable_dwell_min,
            unstable_dwell_max,
        )?;
        Ok(DwellCertificate {
            dwell_min,
            dwell_max,
            stable_dwell_min,
            unstable_dwell_max,
            condition_value,
            sufficient: sufficient_conditions(lambda_s, lambda_u, mu, dwell_min, dwell_max),
        })
    }

    /// Builds a certificate for a family: at the declared dwell pair when the
    /// config pins one, otherwise at the feasibility-search optimum. `None`
    /// when no pair in the window satisfies the condition.
    pub fn for_family(family: &SystemFamily, grid_n: usize) -> Result<Option<Self>, ConditionError> {
        let l = &family.lyapunov;
        if let Some((dc, dh)) = family.declared_pair {
            let cert = Self::evaluate(
                l.lambda_s,
                l.lambda_u,
                l.mu,
                family.dwell_min,
                family.dwell_max,
                dc,
                dh,
            )?;
            return Ok(Some(cert));
        }
        match find_dwell_times(l.lambda_s, l.lambda_u, l.mu, family.dwell_min, family.dwell_max, grid_n)? {
            Some(found) => Ok(Some(Self::evaluate(
                l.lambda_s,
                l.lambda_u,
                l.mu,
                family.dwell_min,
                family.dwell_max,
                found.stable_dwell_min,
                found.unstable_dwell_max,
            )?)),
            None => Ok(None),
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.condition_value < 0.0
    }

    /// Dwell window for stable activations under the stabilizing class.
    pub fn stable_window(&self) -> (f64, f64) {
        (self.stable_dwell_min, self.dwell_max)
    }

    /// Dwell window for unstable activations under the stabilizing class.
    pub fn unstable_window(&self) -> (f64, f64) {
        (self.dwell_min, self.unstable_dwell_max)
    }
}

/// Left-hand side of the dwell-time stability condition,
///
/// ```text
/// -lambda_s * dc/D + lambda_s * dc/(2d) + lambda_u * dh/(2d) + ln(mu)/d
/// ```
///
/// with `d = dwell_min`, `D = dwell_max`, `dc = stable_dwell_min`,
/// `dh = unstable_dwell_max`. Negative values certify stability.
pub fn dwell_condition_value(
    lambda_s: f64,
    lambda_u: f64,
    mu: f64,
    dwell_min: f64,
    dwell_max: f64,
    stable_dwell_min: f64,
    unstable_dwell_max: f64,
) -> Result<f64, ConditionError> {
    if !(lambda_s > 0.0) {
        return Err(ConditionError::Domain {
            detail: format!("lambda_s must be > 0, got {lambda_s}"),
        });
    }
    if !(lambda_u >= 0.0) {
        return Err(ConditionError::Domain {
            detail: format!("lambda_u must be >= 0, got {lambda_u}"),
        });
    }
    if !(mu >= 1.0) {
        return Err(ConditionError::Domain {
            detail: format!("mu must be >= 1, got {mu}"),
        });
    }
    if !(dwell_min > 0.0 && dwell_min <= stable_dwell_min) {
        return Err(ConditionError::Domain {
            detail: format!("need 0 < dwell_min <= stable_dwell_min, got {dwell_min} / {stable_dwell_min}"),
        });
    }
    if !(unstable_dwell_max > 0.0 && unstable_dwell_max <= dwell_max) {
        return Err(ConditionError::Domain {
            detail: format!("need 0 < unstable_dwell_max <= dwell_max, got {unstable_dwell_max} / {dwell_max}"),
        });
    }
    Ok(-lambda_s * stable_dwell_min / dwell_max
        + lambda_s * stable_dwell_min / (2.0 * dwell_min)
        + lambda_u * unstable_dwell_max / (2.0 * dwell_min)
        + mu.ln() / dwell_min)
}

/// Necessary condition on the window alone: a certifying dwell pair can only
/// exist when `dwell_max < 2 * dwell_min`.
pub fn window_can_certify(dwell_min: f64, dwell_max: f64) -> bool {
    dwell_max < 2.0 * dwell_min
}

/// Feasibility-search result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DwellSearchResult {
    pub stable_dwell_min: f64,
    pub unstable_dwell_max: f64,
    pub condition_value: f64,
}

/// Searches for a dwell pair making the stability condition negative.
///
/// The condition is affine in each variable, so the minimizer is analytic:
/// the stable dwell goes to `dwell_max` when `1/(2 dwell_min) < 1/dwell_max`
/// (else to `dwell_min`), and the unstable cap always goes to `dwell_min`.
/// A `grid_n × grid_n` scan over the window cross-checks the analytic
/// optimum. Returns `None` when the minimum is nonnegative, immediately so
/// when the necessary window condition already fails.
pub fn find_dwell_times(
    lambda_s: f64,
    lambda_u: f64,
    mu: f64,
    dwell_min: f64,
    dwell_max: f64,
    grid_n: usize,
) -> Result<Option<DwellSearchResult>, ConditionError> {
    if grid_n < 2 {
        return Err(ConditionError::GridTooSmall(grid_n));
    }
    if !window_can_certify(dwell_min, dwell_max) {
        return Ok(None);
    }

    let stable_coeff = 1.0 / (2.0 * dwell_min) - 1.0 / dwell_max;
    let best_stable = if stable_coeff < 0.0 { dwell_max } else { dwell_min };
    let best_unstable = dwell_min;
    let mut best = DwellSearchResult {
        stable_dwell_min: best_stable,
        unstable_dwell_max: best_unstable,
        condition_value: dwell_condition_value(
            lambda_s,
            lambda_u,
            mu,
            dwell_min,
            dwell_max,
            best_stable,
            best_unstable,
        )?,
    };

    for i in 0..grid_n {
        let dc = dwell_min + (dwell_max - dwell_min) * i as f64 / (grid_n - 1) as f64;
        for j in 0..grid_n {
            let dh = dwell_min + (dwell_max - dwell_min) * j as f64 / (grid_n - 1) as f64;
            let v = dwell_condition_value(lambda_s, lambda_u, mu, dwell_min, dwell_max, dc, dh)?;
            if v < best.condition_value {
                best = DwellSearchResult {
                    stable_dwell_min: dc,
                    unstable_dwell_max: dh,
                    condition_value: v,
                };
            }
        }
    }

    if best.condition_value < 0.0 {
        Ok(Some(best))
    } else {
        Ok(None)
    }
}

/// The four sufficient conditions for feasibility of the dwell window, each
/// checked exactly as stated; when one holds, the designated dwell pair
/// satisfies the main condition.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct SufficientConditions {
    /// Common Lyapunov function case (`mu == 1`):
    /// `dwell_max² / (2 dwell_min²) < lambda_s / (lambda_s + lambda_u)`.
    /// Any dwell pair in the window works.
    pub common_lyapunov: bool,
    /// `lambda_u D/(2d) + ln(mu)/d < lambda_s (d/D - D/(2d))`; any pair works.
    pub any_pair: bool,
    /// `lambda_u/2 + ln(mu)/d < lambda_s (1 - D/(2d))`; designated pair is
    /// (stable = dwell_max, unstable = dwell_min).
    pub long_stable_short_unstable: bool,
    /// `lambda_u D/(2d) + ln(mu)/d < lambda_s (d/D - 1/2)`; designated pair
    /// is (stable = dwell_min, unstable = dwell_max).
    pub short_stable_long_unstable: bool,
}

impl SufficientConditions {
    pub fn as_array(&self) -> [bool; 4] {
        [
            self.common_lyapunov,
            self.any_pair,
            self.long_stable_short_unstable,
            self.short_stable_long_unstable,
        ]
    }

    /// Dwell pair guaranteed by clause `k` (0-based, same order as
    /// [`SufficientConditions::as_array`]).
    pub fn designated_pair(k: usize, dwell_min: f64, dwell_max: f64) -> (f64, f64) {
        match k {
            2 => (dwell_max, dwell_min),
            3 => (dwell_min, dwell_max),
            // The first two clauses certify every pair; evaluate at one.
            _ => (dwell_min, dwell_max),
        }
    }

    pub fn any(&self) -> bool {
        self.as_array().iter().any(|b| *b)
    }
}

/// Evaluates the four sufficient conditions.
pub fn sufficient_conditions(
    lambda_s: f64,
    lambda_u: f64,
    mu: f64,
    dwell_min: f64,
    dwell_max: f64,
) -> SufficientConditions {
    let d = dwell_min;
    let dd = dwell_max;
    let ln_mu = mu.ln();
    SufficientConditions {
        common_lyapunov: mu == 1.0 && dd * dd / (2.0 * d * d) < lambda_s / (lambda_s + lambda_u),
        any_pair: lambda_u * dd / (2.0 * d) + ln_mu / d < lambda_s * (d / dd - dd / (2.0 * d)),
        long_stable_short_unstable: lambda_u / 2.0 + ln_mu / d < lambda_s * (1.0 - dd / (2.0 * d)),
        short_stable_long_unstable: lambda_u * dd / (2.0 * d) + ln_mu / d < lambda_s * (d / dd - 0.5),
    }
}

/// Candidate estimator parameters: the decay/growth rates of the two
/// estimator modes and the two phase lengths of its periodic schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorCandidate {
    /// Decay rate of the ISS mode (written λ*_s in the certificate output).
    pub decay_rate: f64,
    /// Growth rate of the unstable mode (λ*_u).
    pub growth_rate: f64,
    /// Length of the ISS phase of the schedule (δ̃).
    pub iss_phase: f64,
    /// Length of the unstable phase of the schedule (Δ̃).
    pub growth_phase: f64,
}

/// Accepted estimator parameters together with every condition value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorParams {
    pub decay_rate: f64,
    pub growth_rate: f64,
    pub iss_phase: f64,
    pub growth_phase: f64,
    /// Slack values of the three rate bounds:
    /// `[min(decay_rate, lambda_s - decay_rate), growth_rate - lambda_u,
    ///   lambda_s - decay_rate + lambda_u - growth_rate]`.
    /// The first must be positive, the other two nonnegative.
    pub rate_bounds: [f64; 3],
    /// Starred analogue of the dwell condition (must be negative).
    pub starred_dwell_value: f64,
    /// Rate-gap condition value (must be negative).
    pub rate_gap_value: f64,
    /// Schedule average-decay condition value (must be negative).
    pub schedule_decay_value: f64,
    /// Schedule duration-budget condition value (must be nonpositive).
    pub schedule_budget_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionViolation {
    pub name: &'static str,
    pub value: f64,
    pub requirement: &'static str,
}

/// Raw-rate variant of [`eval_estimator_conditions`].
pub fn eval_estimator_conditions_raw(
    lambda_s: f64,
    lambda_u: f64,
    mu: f64,
    cert: &DwellCertificate,
    cand: EstimatorCandidate,
    margin: f64,
) -> Result<EstimatorParams, Vec<ConditionViolation>> {
    let d = cert.dwell_min;
    let dd = cert.dwell_max;
    let dc = cert.stable_dwell_min;
    let dh = cert.unstable_dwell_max;
    let ls = cand.decay_rate;
    let lu = cand.growth_rate;
    let dt = cand.iss_phase;
    let gt = cand.growth_phase;

    let rate_bounds = [
        ls.min(lambda_s - ls),
        lu - lambda_u,
        lambda_s - ls + lambda_u - lu,
    ];
    let starred_dwell_value = -ls * dc / dd + ls * dc / (2.0 * d) + lu * dh / (2.0 * d);
    let rate_gap_value =
        mu.ln() / d - (lambda_s - ls) + (lambda_s - ls + lambda_u - lu) * dh / (2.0 * d);
    let schedule_decay_value = -ls + (ls + lu) * gt / (dt + gt);
    let schedule_budget_value = gt * dh / (2.0 * d) + dt * dh / (2.0 * d) - gt;

    let mut violations = Vec::new();
    if !(rate_bounds[0] > 0.0) {
        violations.push(ConditionViolation {
            name: "rate_bounds[0]",
            value: rate_bounds[0],
            requirement: "0 < decay_rate < lambda_s (strict)",
        });
    }
    if !(rate_bounds[1] >= 0.0) {
        violations.push(ConditionViolation {
            name: "rate_bounds[1]",
            value: rate_bounds[1],
            requirement: "growth_rate >= lambda_u",
        });
    }
    if !(rate_bounds[2] >= 0.0) {
        violations.push(ConditionViolation {
            name: "rate_bounds[2]",
            value: rate_bounds[2],
            requirement: "lambda_s - decay_rate + lambda_u - growth_rate >= 0",
        });
    }
    if !(dt > 0.0 && dt <= dc) {
        violations.push(ConditionViolation {
            name: "iss_phase",
            value: dt,
            requirement: "0 < iss_phase <= stable_dwell_min",
        });
    }
    if !(gt >= dh) {
        violations.push(ConditionViolation {
            name: "growth_phase",
            value: gt,
            requirement: "growth_phase >= unstable_dwell_max",
        });
    }
    if !(starred_dwell_value < -margin) {
        violations.push(ConditionViolation {
            name: "starred_dwell_value",
            value: starred_dwell_value,
            requirement: "< 0 (strict)",
        });
    }
    if !(rate_gap_value < -margin) {
        violations.push(ConditionViolation {
            name: "rate_gap_value",
            value: rate_gap_value,
            requirement: "< 0 (strict)",
        });
    }
    if !(schedule_decay_value < -margin) {
        violations.push(ConditionViolation {
            name: "schedule_decay_value",
            value: schedule_decay_value,
            requirement: "< 0 (strict)",
        });
    }
    if !(schedule_budget_value <= -margin) {
        violations.push(ConditionViolation {
            name: "schedule_budget_value",
            value: schedule_budget_value,
            requirement: "<= 0",
        });
    }
    if !violations.is_empty() {
        return Err(violations);
    }
    Ok(EstimatorParams {
        decay_rate: ls,
        growth_rate: lu,
        iss_phase: dt,
        growth_phase: gt,
        rate_bounds,
        starred_dwell_value,
        rate_gap_value,
        schedule_decay_value,
        schedule_budget_value,
    })
}

/// Checks a candidate against all estimator conditions for `family` and
/// `cert`; on acceptance returns the parameters with every condition value,
/// otherwise the list of violated conditions with their numeric values.
pub fn eval_estimator_conditions(
    family: &SystemFamily,
    cert: &DwellCertificate,
    cand: EstimatorCandidate,
    margin: f64,
) -> Result<EstimatorParams, Vec<ConditionViolation>> {
    let l = &family.lyapunov;
    eval_estimator_conditions_raw(l.lambda_s, l.lambda_u, l.mu, cert, cand, margin)
}

/// Raw-rate variant of [`find_estimator_params`].
pub fn find_estimator_params_raw(
    lambda_s: f64,
    lambda_u: f64,
    mu: f64,
    cert: &DwellCertificate,
    grid_n: usize,
) -> Result<Option<EstimatorParams>, ConditionError> {
    if grid_n < 2 {
        return Err(ConditionError::GridTooSmall(grid_n));
    }
    if !cert.is_feasible() {
        return Err(ConditionError::InfeasibleCertificate(cert.condition_value));
    }

    let mut best: Option<(f64, EstimatorCandidate)> = None;
    for i in 1..=grid_n {
        let ls = lambda_s * i as f64 / (grid_n + 1) as f64;
        let headroom = lambda_s - ls;
        for j in 0..grid_n {
            let lu = lambda_u + headroom * j as f64 / (grid_n - 1) as f64;
            for k in 1..=grid_n {
                let dt = cert.stable_dwell_min * k as f64 / grid_n as f64;
                for l in 0..grid_n {
                    let gt = cert.unstable_dwell_max * (1.0 + 3.0 * l as f64 / (grid_n - 1) as f64);
                    let cand = EstimatorCandidate {
                        decay_rate: ls,
                        growth_rate: lu,
                        iss_phase: dt,
                        growth_phase: gt,
                    };
                    if let Ok(p) = eval_estimator_conditions_raw(lambda_s, lambda_u, mu, cert, cand, 0.0) {
                        let score = (-p.starred_dwell_value)
                            .min(-p.rate_gap_value)
                            .min(-p.schedule_decay_value)
                            .min(-p.schedule_budget_value);
                        if best.as_ref().map_or(true, |(s, _)| score > *s) {
                            best = Some((score, cand));
                        }
                    }
                }
            }
        }
    }

    Ok(best.map(|(_, cand)| {
        eval_estimator_conditions_raw(lambda_s, lambda_u, mu, cert, cand, 0.0)
            .expect("winning grid candidate re-validates")
    }))
}

/// Grid search over the estimator parameter region, maximizing the minimum
/// slack across the four inequality conditions. `None` when the region is
/// empty on the grid.
pub fn find_estimator_params(
    family: &SystemFamily,
    cert: &DwellCertificate,
    grid_n: usize,
) -> Result<Option<EstimatorParams>, ConditionError> {
    let l = &family.lyapunov;
    find_estimator_params_raw(l.lambda_s, l.lambda_u, l.mu, cert, grid_n)
}
