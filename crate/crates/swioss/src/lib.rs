//! Stability certification and state-norm estimation for continuous-time
//! switched nonlinear systems under restricted switching.
//!
//! The crate is organized around a pipeline:
//!
//! 1. [`family`] — the family of subsystems with Lyapunov-like data and the
//!    admissible-switch graph, loaded from a small config DSL or from the
//!    built-in example family.
//! 2. [`conditions`] — the scalar dwell-time feasibility condition, its
//!    necessary/sufficient companions, and the estimator parameter conditions.
//! 3. [`signals`] — switching signals: validation against the admissible and
//!    stabilizing classes, counting/duration statistics, and seeded random
//!    generation inside the stabilizing class.
//! 4. [`sim`] — fixed-step integration of the switched dynamics, the
//!    schedule-driven state-norm estimator, and the switching-tracking
//!    reference estimator.
//! 5. [`envelope`] — the explicit decay/gain envelopes implied by the
//!    certificate, and trajectory-level verification of the stability and
//!    estimation inequalities.

pub mod conditions;
pub mod envelope;
pub mod expr;
pub mod family;
pub mod signals;
pub mod sim;

pub use conditions::{DwellCertificate, EstimatorParams};
pub use envelope::Envelope;
pub use expr::Expr;
pub use family::{StabilityClass, SystemFamily};
pub use signals::SwitchingSignal;
pub use sim::{InputSignal, Trajectory};
