//! Safe stochastic constrained optimization.
//!
//! `lbsgd` minimizes `f⁰(x)` subject to `fⁱ(x) ≤ 0` when only noisy values (and
//! possibly noisy gradients) are observable, while keeping every queried point
//! feasible with high probability. The solver runs stochastic gradient descent
//! on the log barrier `f⁰ − η Σ ln(−fⁱ)` with a step size derived from
//! confidence bounds on the constraint slacks and a local smoothness estimate.
//!
//! Module map:
//!
//! * [`problem`]: problem definition, regularity constants, solver settings, KKT certificates.
//! * [`oracle`]: first-order and two-point zeroth-order batch oracles.
//! * [`barrier`]: per-iteration barrier quantities (gradient, bounds, step size, diagnostics).
//! * [`solver`]: the fixed-η iteration and the decreasing-η restart scheme.
//! * [`benchmarks`]: synthetic test problems and a tabular CMDP policy-search task.
//! * [`harness`]: experiment configs, multi-seed runs, auditing, CSV/SVG output.

pub mod barrier;
pub mod benchmarks;
pub mod error;
pub mod harness;
pub mod oracle;
pub mod problem;
pub mod solver;
pub(crate) mod vecops;

pub use error::{Error, Result};
pub use problem::{Function, KktCertificate, Mfcq, ProblemSpec, SolverConfig};
