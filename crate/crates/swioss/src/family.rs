//! The family of subsystems: per-mode dynamics and output maps, Lyapunov-like
//! data, the admissible-switch graph, and the dwell-time window. Families are
//! immutable after load and safe to share across threads read-only.

pub mod config;

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::expr::{EvalCtx, Expr, ExprError};

/// Absolute tolerance for "vanishes at the origin" probes.
const ORIGIN_TOL: f64 = 1e-9;
/// Finite-difference step for gradients of expression-backed Lyapunov functions.
const FD_STEP: f64 = 1e-6;
/// Number of sampled states for the load-time sandwich probe.
const SANDWICH_SAMPLES: usize = 256;
/// Monotonicity grid for gain functions: 10^3 points on [0, 10^3].
const GAIN_GRID_POINTS: usize = 1000;
const GAIN_GRID_MAX: f64 = 1000.0;

#[derive(Debug, Error)]
pub enum FamilyError {
    #[error("io error reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error("bad expression for {context}: {source}")]
    Expr {
        context: String,
        #[source]
        source: ExprError,
    },
    #[error("subsystem indices must be contiguous 1..=N; {detail}")]
    BadIndices { detail: String },
    #[error("dimension mismatch: {detail}")]
    DimensionMismatch { detail: String },
    #[error("{what} does not vanish at the origin (|value| = {value:e} > 1e-9)")]
    NotVanishingAtOrigin { what: String, value: f64 },
    #[error("rate {name} must be positive, got {value}")]
    NonPositiveRate { name: &'static str, value: f64 },
    #[error("comparison factor mu must be >= 1, got {value}")]
    MuBelowOne { value: f64 },
    #[error("gain function {name} is not strictly increasing near r = {at}")]
    GainNotIncreasing { name: String, at: f64 },
    #[error("gain function {name} must vanish at 0, got {value:e}")]
    GainNotZeroAtZero { name: String, value: f64 },
    #[error("Lyapunov sandwich violated for subsystem {index} at x = {x:?}: alpha_lower = {lo}, V = {v}, alpha_upper = {hi}")]
    SandwichViolated {
        index: usize,
        x: Vec<f64>,
        lo: f64,
        v: f64,
        hi: f64,
    },
    #[error("switch graph has a self-loop at {index}")]
    SelfLoop { index: usize },
    #[error("switch graph edge ({from}, {to}) references an unknown subsystem")]
    BadEdge { from: usize, to: usize },
    #[error("unstable subsystem {index} has no admissible switch to a stable subsystem")]
    Assumption3Violated { index: usize },
    #[error("bad dwell window: {detail}")]
    BadDwellWindow { detail: String },
    #[error("unknown builtin family tag `{0}`")]
    UnknownBuiltin(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum StabilityClass {
    Stable,
    Unstable,
}

/// One member of the family: its vector field, output map and class label.
#[derive(Debug, Clone)]
pub struct Subsystem {
    pub index: usize,
    pub dynamics: Vec<Expr>,
    pub output: Vec<Expr>,
    pub class: StabilityClass,
}

/// Lyapunov-like function of the state, either a scaled quadratic form
/// (analytic gradient) or a DSL expression (finite-difference gradient).
#[derive(Debug, Clone)]
pub enum VFunction {
    Quadratic { q: Vec<Vec<f64>>, scale: f64 },
    Expr(Expr),
}

impl VFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            VFunction::Quadratic { q, scale } => {
                let mut acc = 0.0;
                for (i, row) in q.iter().enumerate() {
                    for (j, qij) in row.iter().enumerate() {
                        acc += qij * x[i] * x[j];
                    }
                }
                scale * acc
            }
            VFunction::Expr(e) => e.eval(&EvalCtx::states_inputs(x, &[])),
        }
    }

    /// Gradient. Quadratic forms use the analytic `scale * (Q + Qᵀ) x`;
    /// expressions use a central difference with step 1e-6.
    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        match self {
            VFunction::Quadratic { q, scale } => {
                let d = x.len();
                let mut g = vec![0.0; d];
                for i in 0..d {
                    let mut acc = 0.0;
                    for j in 0..d {
                        acc += (q[i][j] + q[j][i]) * x[j];
                    }
                    g[i] = scale * acc;
                }
                g
            }
            VFunction::Expr(e) => {
                let mut xp = x.to_vec();
                let mut g = vec![0.0; x.len()];
                for i in 0..x.len() {
                    let x0 = x[i];
                    xp[i] = x0 + FD_STEP;
                    let hi = e.eval(&EvalCtx::states_inputs(&xp, &[]));
                    xp[i] = x0 - FD_STEP;
                    let lo = e.eval(&EvalCtx::states_inputs(&xp, &[]));
                    xp[i] = x0;
                    g[i] = (hi - lo) / (2.0 * FD_STEP);
                }
                g
            }
        }
    }
}

/// Scalar class-K gain function of a nonnegative argument.
#[derive(Debug, Clone)]
pub struct KFunction {
    expr: Expr,
}

impl KFunction {
    pub fn new(expr: Expr) -> Self {
        KFunction { expr }
    }

    pub fn parse(src: &str) -> Result<Self, ExprError> {
        let expr = Expr::parse(src)?;
        expr.check_vars(0, 0, true, false)?;
        Ok(KFunction { expr })
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.expr.eval(&EvalCtx::scalar_r(r))
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }
}

/// Per-family Lyapunov data: one function per subsystem, shared rates and
/// gains. `alpha_upper` is served as `r ↦ max(r, raw(r))` so the estimation
/// envelope formulas may assume `alpha_upper(r) >= r`.
#[derive(Debug, Clone)]
pub struct LyapunovData {
    pub v: Vec<VFunction>,
    pub lambda_s: f64,
    pub lambda_u: f64,
    pub mu: f64,
    pub gamma1: KFunction,
    pub gamma2: KFunction,
    pub alpha_lower: KFunction,
    alpha_upper_raw: KFunction,
}

impl LyapunovData {
    pub fn alpha_upper(&self, r: f64) -> f64 {
        r.max(self.alpha_upper_raw.eval(r))
    }

    pub fn alpha_lower_eval(&self, r: f64) -> f64 {
        self.alpha_lower.eval(r)
    }

    pub fn alpha_upper_raw(&self) -> &KFunction {
        &self.alpha_upper_raw
    }
}

/// Directed admissible-switch graph over subsystem indices.
#[derive(Debug, Clone, Default)]
pub struct SwitchGraph {
    edges: BTreeSet<(usize, usize)>,
}

impl SwitchGraph {
    pub fn new(edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        SwitchGraph {
            edges: edges.into_iter().collect(),
        }
    }

    pub fn contains(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn out_neighbors(&self, from: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .range((from, 0)..(from + 1, 0))
            .map(|&(_, q)| q)
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// State/input/output dimensions shared by every subsystem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub d: usize,
    pub m: usize,
    pub p: usize,
}

/// The validated family. Construction goes through [`SystemFamily::build`],
/// which probes every type invariant.
#[derive(Debug, Clone)]
pub struct SystemFamily {
    pub name: Option<String>,
    subsystems: Vec<Subsystem>,
    pub graph: SwitchGraph,
    pub lyapunov: LyapunovData,
    /// Admissible minimum dwell time on every subsystem.
    pub dwell_min: f64,
    /// Admissible maximum dwell time on every subsystem.
    pub dwell_max: f64,
    /// Declared dwell pair (delta_check, Delta_hat), when the config pins one.
    pub declared_pair: Option<(f64, f64)>,
    dims: Dims,
}

impl SystemFamily {
    /// Validates and assembles a family. Subsystems must carry contiguous
    /// indices 1..=N.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        name: Option<String>,
        mut subsystems: Vec<Subsystem>,
        graph: SwitchGraph,
        lyapunov: LyapunovData,
        dwell_min: f64,
        dwell_max: f64,
        declared_pair: Option<(f64, f64)>,
        explicit_m: Option<usize>,
    ) -> Result<Self, FamilyError> {
        if subsystems.is_empty() {
            return Err(FamilyError::BadIndices {
                detail: "no subsystems defined".into(),
            });
        }
        subsystems.sort_by_key(|s| s.index);
        for (k, s) in subsystems.iter().enumerate() {
            if s.index != k + 1 {
                return Err(FamilyError::BadIndices {
                    detail: format!("expected index {}, found {}", k + 1, s.index),
                });
            }
        }
        if lyapunov.v.len() != subsystems.len() {
            return Err(FamilyError::DimensionMismatch {
                detail: format!(
                    "{} Lyapunov functions for {} subsystems",
                    lyapunov.v.len(),
                    subsystems.len()
                ),
            });
        }

        let d = subsystems[0].dynamics.len();
        let p = subsystems[0].output.len();
        let mut m = explicit_m.unwrap_or(0);
        for s in &subsystems {
            if s.dynamics.len() != d {
                return Err(FamilyError::DimensionMismatch {
                    detail: format!(
                        "subsystem {} has {} dynamics components, expected {}",
                        s.index,
                        s.dynamics.len(),
                        d
                    ),
                });
            }
            if s.output.len() != p {
                return Err(FamilyError::DimensionMismatch {
                    detail: format!(
                        "subsystem {} has {} output components, expected {}",
                        s.index,
                        s.output.len(),
                        p
                    ),
                });
            }
            if explicit_m.is_none() {
                for e in &s.dynamics {
                    m = m.max(e.max_input_index());
                }
            }
        }

        let fam = SystemFamily {
            name,
            subsystems,
            graph,
            lyapunov,
            dwell_min,
            dwell_max,
            declared_pair,
            dims: Dims { d, m, p },
        };
        fam.validate()?;
        Ok(fam)
    }

    fn validate(&self) -> Result<(), FamilyError> {
        let Dims { d, m, .. } = self.dims;

        // Expression alphabets.
        for s in &self.subsystems {
            for (k, e) in s.dynamics.iter().enumerate() {
                e.check_vars(d, m, false, false).map_err(|source| FamilyError::Expr {
                    context: format!("f{}[{}]", s.index, k + 1),
                    source,
                })?;
            }
            for (k, e) in s.output.iter().enumerate() {
                e.check_vars(d, 0, false, false).map_err(|source| FamilyError::Expr {
                    context: format!("h{}[{}] (outputs depend on the state only)", s.index, k + 1),
                    source,
                })?;
            }
        }

        // f_p(0,0) = 0 and h_p(0) = 0.
        let zero_x = vec![0.0; d];
        let zero_v = vec![0.0; m];
        for s in &self.subsystems {
            for (k, e) in s.dynamics.iter().enumerate() {
                let val = e.eval(&EvalCtx::states_inputs(&zero_x, &zero_v));
                if !(val.abs() <= ORIGIN_TOL) {
                    return Err(FamilyError::NotVanishingAtOrigin {
                        what: format!("f{}[{}]", s.index, k + 1),
                        value: val,
                    });
                }
            }
            for (k, e) in s.output.iter().enumerate() {
                let val = e.eval(&EvalCtx::states_inputs(&zero_x, &[]));
                if !(val.abs() <= ORIGIN_TOL) {
                    return Err(FamilyError::NotVanishingAtOrigin {
                        what: format!("h{}[{}]", s.index, k + 1),
                        value: val,
                    });
                }
            }
        }

        // Rates and comparison factor.
        if !(self.lyapunov.lambda_s > 0.0) {
            return Err(FamilyError::NonPositiveRate {
                name: "lambda_s",
                value: self.lyapunov.lambda_s,
            });
        }
        if !(self.lyapunov.lambda_u > 0.0) {
            return Err(FamilyError::NonPositiveRate {
                name: "lambda_u",
                value: self.lyapunov.lambda_u,
            });
        }
        if !(self.lyapunov.mu >= 1.0) {
            return Err(FamilyError::MuBelowOne {
                value: self.lyapunov.mu,
            });
        }

        // Gain functions: zero at zero, strictly increasing on the probe grid.
        let alpha_upper_eff = |r: f64| self.lyapunov.alpha_upper(r);
        let gains: [(&str, Box<dyn Fn(f64) -> f64>); 4] = [
            ("gamma1", Box::new(|r| self.lyapunov.gamma1.eval(r))),
            ("gamma2", Box::new(|r| self.lyapunov.gamma2.eval(r))),
            ("alpha_lower", Box::new(|r| self.lyapunov.alpha_lower.eval(r))),
            ("alpha_upper", Box::new(alpha_upper_eff)),
        ];
        for (name, g) in &gains {
            let at_zero = g(0.0);
            if !(at_zero.abs() <= ORIGIN_TOL) {
                return Err(FamilyError::GainNotZeroAtZero {
                    name: (*name).into(),
                    value: at_zero,
                });
            }
            let mut prev = at_zero;
            for k in 1..=GAIN_GRID_POINTS {
                let r = GAIN_GRID_MAX * k as f64 / GAIN_GRID_POINTS as f64;
                let val = g(r);
                if !(val > prev) {
                    return Err(FamilyError::GainNotIncreasing {
                        name: (*name).into(),
                        at: r,
                    });
                }
                prev = val;
            }
        }

        // Sandwich probe on sampled states.
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
        for _ in 0..SANDWICH_SAMPLES {
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-5.0..=5.0)).collect();
            let norm = x.iter().map(|c| c * c).sum::<f64>().sqrt();
            let lo = self.lyapunov.alpha_lower.eval(norm);
            let hi = self.lyapunov.alpha_upper(norm);
            for s in &self.subsystems {
                let v = self.lyapunov.v[s.index - 1].eval(&x);
                if !(lo <= v + ORIGIN_TOL && v <= hi + ORIGIN_TOL) {
                    return Err(FamilyError::SandwichViolated {
                        index: s.index,
                        x,
                        lo,
                        v,
                        hi,
                    });
                }
            }
        }

        // Switch graph.
        let n = self.subsystems.len();
        for (pq, to) in self.graph.edges() {
            if pq == to {
                return Err(FamilyError::SelfLoop { index: pq });
            }
            if pq < 1 || pq > n || to < 1 || to > n {
                return Err(FamilyError::BadEdge { from: pq, to });
            }
        }
        for s in &self.subsystems {
            if s.class == StabilityClass::Unstable {
                let ok = self
                    .graph
                    .out_neighbors(s.index)
                    .any(|q| self.subsystems[q - 1].class == StabilityClass::Stable);
                if !ok {
                    return Err(FamilyError::Assumption3Violated { index: s.index });
                }
            }
        }

        // Dwell window.
        if !(self.dwell_min > 0.0 && self.dwell_min <= self.dwell_max) {
            return Err(FamilyError::BadDwellWindow {
                detail: format!("need 0 < delta <= Delta, got {} / {}", self.dwell_min, self.dwell_max),
            });
        }
        if let Some((dc, dh)) = self.declared_pair {
            if !(self.dwell_min <= dc && dc <= self.dwell_max && self.dwell_min <= dh && dh <= self.dwell_max) {
                return Err(FamilyError::BadDwellWindow {
                    detail: format!(
                        "declared pair ({dc}, {dh}) outside [{}, {}]",
                        self.dwell_min, self.dwell_max
                    ),
                });
            }
        }

        Ok(())
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn n(&self) -> usize {
        self.subsystems.len()
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    pub fn subsystem(&self, index: usize) -> &Subsystem {
        &self.subsystems[index - 1]
    }

    pub fn contains_index(&self, index: usize) -> bool {
        index >= 1 && index <= self.subsystems.len()
    }

    pub fn class(&self, index: usize) -> StabilityClass {
        self.subsystems[index - 1].class
    }

    pub fn is_stable(&self, index: usize) -> bool {
        self.class(index) == StabilityClass::Stable
    }

    pub fn stable_indices(&self) -> Vec<usize> {
        self.subsystems
            .iter()
            .filter(|s| s.class == StabilityClass::Stable)
            .map(|s| s.index)
            .collect()
    }

    pub fn unstable_indices(&self) -> Vec<usize> {
        self.subsystems
            .iter()
            .filter(|s| s.class == StabilityClass::Unstable)
            .map(|s| s.index)
            .collect()
    }

    pub fn has_unstable(&self) -> bool {
        self.subsystems.iter().any(|s| s.class == StabilityClass::Unstable)
    }

    pub fn has_stable(&self) -> bool {
        self.subsystems.iter().any(|s| s.class == StabilityClass::Stable)
    }

    /// Writes f_p(x, v) into `out`.
    pub fn eval_dynamics(&self, index: usize, x: &[f64], v: &[f64], out: &mut [f64]) {
        let ctx = EvalCtx::states_inputs(x, v);
        for (o, e) in out.iter_mut().zip(self.subsystems[index - 1].dynamics.iter()) {
            *o = e.eval(&ctx);
        }
    }

    /// Writes h_p(x) into `out`.
    pub fn eval_output(&self, index: usize, x: &[f64], out: &mut [f64]) {
        let ctx = EvalCtx::states_inputs(x, &[]);
        for (o, e) in out.iter_mut().zip(self.subsystems[index - 1].output.iter()) {
            *o = e.eval(&ctx);
        }
    }

    pub fn v_value(&self, index: usize, x: &[f64]) -> f64 {
        self.lyapunov.v[index - 1].eval(x)
    }

    pub fn v_grad(&self, index: usize, x: &[f64]) -> Vec<f64> {
        self.lyapunov.v[index - 1].grad(x)
    }

    /// gamma1(|v|) + gamma2(|y|), the combined supply term.
    pub fn gamma_bar(&self, v_norm: f64, y_norm: f64) -> f64 {
        self.lyapunov.gamma1.eval(v_norm) + self.lyapunov.gamma2.eval(y_norm)
    }
}

/// Loads and validates a family from a config file.
pub fn load_family(path: impl AsRef<Path>) -> Result<SystemFamily, FamilyError> {
    let text = std::fs::read_to_string(path)?;
    load_family_str(&text)
}

/// Same as [`load_family`], from an in-memory config string.
pub fn load_family_str(text: &str) -> Result<SystemFamily, FamilyError> {
    let raw = config::parse_config(text)?;
    config::family_from_raw(raw)
}

/// Returns a builtin family by tag. `paper-example` is the three-subsystem
/// planar family with one stable and two unstable members.
pub fn builtin(tag: &str) -> Result<SystemFamily, FamilyError> {
    match tag {
        "paper-example" => Ok(builtin_paper_example()),
        other => Err(FamilyError::UnknownBuiltin(other.to_string())),
    }
}

/// The builtin example family:
///
/// * subsystem 1 (stable): f1 = (-2x1 + sin(x1-x2), -2x2 + sin(x2-x1) + v1/2), h1 = x1 - x2
/// * subsystem 2 (unstable): f2 = (x2/2 + |x1|/4, sat(x1) + v1/2), h2 = |x1|
/// * subsystem 3 (unstable): f3 = (x1/5 + x2/10, 3x1/10 + v1), h3 = x1
///
/// with V1 = V2 = (x1² + x2²)/2, V3 = x1² + x2², lambda_s = 3.5,
/// lambda_u = 0.73, mu = 2, gamma1(r) = gamma2(r) = 2r², dwell window
/// [3.5, 4], declared pair (3.5, 4) and switches {1→2, 1→3, 2→1, 3→1}.
pub fn builtin_paper_example() -> SystemFamily {
    let parse = |s: &str| Expr::parse(s).expect("builtin expression parses");
    let subsystems = vec![
        Subsystem {
            index: 1,
            dynamics: vec![parse("-2*x1 + sin(x1 - x2)"), parse("-2*x2 + sin(x2 - x1) + 0.5*v1")],
            output: vec![parse("x1 - x2")],
            class: StabilityClass::Stable,
        },
        Subsystem {
            index: 2,
            dynamics: vec![parse("0.5*x2 + 0.25*abs(x1)"), parse("sat(x1) + 0.5*v1")],
            output: vec![parse("abs(x1)")],
            class: StabilityClass::Unstable,
        },
        Subsystem {
            index: 3,
            dynamics: vec![parse("0.2*x1 + 0.1*x2"), parse("0.3*x1 + v1")],
            output: vec![parse("x1")],
            class: StabilityClass::Unstable,
        },
    ];
    let half = VFunction::Quadratic {
        q: vec![vec![0.5, 0.0], vec![0.0, 0.5]],
        scale: 1.0,
    };
    let full = VFunction::Quadratic {
        q: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        scale: 1.0,
    };
    let lyapunov = LyapunovData {
        v: vec![half.clone(), half, full],
        lambda_s: 3.5,
        lambda_u: 0.73,
        mu: 2.0,
        gamma1: KFunction::parse("2*r*r").unwrap(),
        gamma2: KFunction::parse("2*r*r").unwrap(),
        alpha_lower: KFunction::parse("0.5*r*r").unwrap(),
        alpha_upper_raw: KFunction::parse("r*r").unwrap(),
    };
    let graph = SwitchGraph::new([(1, 2), (1, 3), (2, 1), (3, 1)]);
    SystemFamily::build(
        Some("paper-example".into()),
        subsystems,
        graph,
        lyapunov,
        3.5,
        4.0,
        Some((3.5, 4.0)),
        Some(1),
    )
    .expect("builtin family validates")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_constants() {
        let fam = builtin_paper_example();
        assert_eq!(fam.lyapunov.lambda_s, 3.5);
        assert_eq!(fam.lyapunov.lambda_u, 0.73);
        assert_eq!(fam.lyapunov.mu, 2.0);
        assert_eq!(fam.dwell_min, 3.5);
        assert_eq!(fam.dwell_max, 4.0);
        assert_eq!(fam.declared_pair, Some((3.5, 4.0)));
        assert_eq!(fam.stable_indices(), vec![1]);
        assert_eq!(fam.unstable_indices(), vec![2, 3]);
        assert_eq!(fam.dims(), Dims { d: 2, m: 1, p: 1 });
        let edges: Vec<_> = fam.graph.edges().collect();
        assert_eq!(edges, vec![(1, 2), (1, 3), (2, 1), (3, 1)]);
    }

    #[test]
    fn builtin_v3_direct_evaluation() {
        let fam = builtin_paper_example();
        assert_eq!(fam.v_value(3, &[1.0, 1.0]), 2.0);
        assert_eq!(fam.v_value(1, &[1.0, 1.0]), 1.0);
    }

    #[test]
    fn alpha_upper_dominates_identity() {
        let fam = builtin_paper_example();
        // Below r = 1 the raw r² dips under r; the served function must not.
        assert_eq!(fam.lyapunov.alpha_upper(0.5), 0.5);
        assert_eq!(fam.lyapunov.alpha_upper(2.0), 4.0);
    }

    #[test]
    fn quadratic_gradient_matches_finite_difference() {
        let fam = builtin_paper_example();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            for p in 1..=3 {
                let g = fam.v_grad(p, &x);
                let e = &fam.lyapunov.v[p - 1];
                for i in 0..2 {
                    let mut xp = x;
                    xp[i] += FD_STEP;
                    let hi = e.eval(&xp);
                    xp[i] -= 2.0 * FD_STEP;
                    let lo = e.eval(&xp);
                    let fd = (hi - lo) / (2.0 * FD_STEP);
                    let scale = g[i].abs().max(1.0);
                    assert!(
                        (g[i] - fd).abs() / scale <= 1e-6,
                        "grad mismatch p={p} i={i}: analytic {} vs fd {fd}",
                        g[i]
                    );
                }
            }
        }
    }

    // Decay (stable) and growth (unstable) rate inequalities, sampled.
    #[test]
    fn builtin_rate_inequalities_sampled() {
        let fam = builtin_paper_example();
        let lam_s = fam.lyapunov.lambda_s;
        let lam_u = fam.lyapunov.lambda_u;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut y = [0.0];
        let mut fx = [0.0, 0.0];
        for _ in 0..10_000 {
            let x = [rng.gen_range(-5.0..=5.0), rng.gen_range(-5.0..=5.0)];
            let v = [rng.gen_range(-0.5..=0.5)];
            for p in 1..=3 {
                fam.eval_dynamics(p, &x, &v, &mut fx);
                fam.eval_output(p, &x, &mut y);
                let grad = fam.v_grad(p, &x);
                let deriv = grad[0] * fx[0] + grad[1] * fx[1];
                let vval = fam.v_value(p, &x);
                let supply = fam.gamma_bar(v[0].abs(), y[0].abs());
                let bound = if fam.is_stable(p) {
                    -lam_s * vval + supply
                } else {
                    lam_u * vval + supply
                };
                assert!(
                    deriv <= bound + 1e-7,
                    "rate inequality violated for p={p} at x={x:?} v={v:?}: {deriv} > {bound}"
                );
            }
        }
    }

    // Pairwise comparison across admissible switches.
    #[test]
    fn builtin_comparison_on_edges_sampled() {
        let fam = builtin_paper_example();
        let mu = fam.lyapunov.mu;
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..10_000 {
            let x = [rng.gen_range(-5.0..=5.0), rng.gen_range(-5.0..=5.0)];
            for (p, q) in fam.graph.edges() {
                let vp = fam.v_value(p, &x);
                let vq = fam.v_value(q, &x);
                assert!(
                    vq <= mu * vp + 1e-9,
                    "comparison violated on edge ({p},{q}) at {x:?}: {vq} > {mu}*{vp}"
                );
            }
        }
    }

    #[test]
    fn builtin_sandwich_sampled() {
        let fam = builtin_paper_example();
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..10_000 {
            let x: [f64; 2] = [rng.gen_range(-5.0..=5.0), rng.gen_range(-5.0..=5.0)];
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            let lo = fam.lyapunov.alpha_lower.eval(r);
            let hi = fam.lyapunov.alpha_upper(r);
            for p in 1..=3 {
                let v = fam.v_value(p, &x);
                assert!(lo <= v + 1e-9 && v <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn builtin_tag_resolution() {
        assert!(builtin("paper-example").is_ok());
        assert!(matches!(builtin("nope"), Err(FamilyError::UnknownBuiltin(_))));
    }
}
