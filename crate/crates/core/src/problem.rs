//! Problem definition, regularity constants and solver settings.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecops::{central_difference, norm};

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Relative tolerance for the gradient/finite-difference consistency check.
pub const GRADIENT_CHECK_TOL: f64 = 1e-5;

/// One of `f⁰, …, fᵐ` together with its regularity constants.
#[derive(Clone)]
pub struct Function {
    pub value: ScalarFn,
    pub gradient: Option<GradientFn>,
    /// Smoothness constant `Mᵢ` (Lipschitz constant of the gradient).
    pub smoothness: f64,
    /// Lipschitz constant `Lᵢ` on the feasible set.
    pub lipschitz: f64,
}

impl Function {
    pub fn new(value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Function {
            value: Arc::new(value),
            gradient: None,
            smoothness: 0.0,
            lipschitz: 0.0,
        }
    }

    pub fn with_gradient(
        mut self,
        gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    pub fn with_constants(mut self, smoothness: f64, lipschitz: f64) -> Self {
        self.smoothness = smoothness;
        self.lipschitz = lipschitz;
        self
    }
}

impl fmt::Debug for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Function")
            .field("has_gradient", &self.gradient.is_some())
            .field("smoothness", &self.smoothness)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

/// Extended-MFCQ constants `(l, ρ)`. Only used by diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mfcq {
    pub l: f64,
    pub rho: f64,
}

/// `min f⁰(x) s.t. fⁱ(x) ≤ 0, i = 1..m` with known regularity constants.
///
/// Index 0 of `functions` is the objective; indices `1..=m` are constraints.
/// The value callables are exact and are used for auditing, never by the
/// solver directly (the solver only sees oracle output).
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub name: String,
    pub dim: usize,
    pub functions: Vec<Function>,
    /// Diameter bound `R` of the feasible set.
    pub diameter: f64,
    /// Safe starting point.
    pub x0: Vec<f64>,
    /// Start margin `β`: `max fⁱ(x0) ≤ −β`.
    pub start_margin: f64,
    /// Uniform bound `β̂ ≥ |fⁱ(x)|` on the feasible set.
    pub value_bound: f64,
    pub mfcq: Option<Mfcq>,
}

impl ProblemSpec {
    pub fn num_constraints(&self) -> usize {
        self.functions.len().saturating_sub(1)
    }

    pub fn value(&self, i: usize, x: &[f64]) -> f64 {
        (self.functions[i].value)(x)
    }

    pub fn values(&self, x: &[f64]) -> Vec<f64> {
        self.functions.iter().map(|f| (f.value)(x)).collect()
    }

    pub fn has_gradients(&self) -> bool {
        self.functions.iter().all(|f| f.gradient.is_some())
    }

    pub fn gradient(&self, i: usize, x: &[f64]) -> Option<Vec<f64>> {
        self.functions[i].gradient.as_ref().map(|g| g(x))
    }

    pub fn smoothness(&self, i: usize) -> f64 {
        self.functions[i].smoothness
    }

    pub fn lipschitz(&self, i: usize) -> f64 {
        self.functions[i].lipschitz
    }

    /// `max_{i≥1} fⁱ(x)`, or `-∞` when unconstrained.
    pub fn max_constraint(&self, x: &[f64]) -> f64 {
        self.functions[1..]
            .iter()
            .map(|f| (f.value)(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_strictly_feasible(&self, x: &[f64]) -> bool {
        self.max_constraint(x) < 0.0
    }

    pub fn max_lipschitz(&self) -> f64 {
        self.functions.iter().map(|f| f.lipschitz).fold(0.0, f64::max)
    }

    pub fn max_smoothness(&self) -> f64 {
        self.functions.iter().map(|f| f.smoothness).fold(0.0, f64::max)
    }

    /// Returns one diagnostic per violated construction invariant.
    pub fn validate(&self) -> Vec<Diagnostic> {
        validate_problem(self)
    }

    /// Validates and returns the spec, or every diagnostic as an error.
    pub fn checked(self) -> Result<Self> {
        let diagnostics = self.validate();
        if diagnostics.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidProblem(diagnostics))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    DimensionMismatch { expected: usize, found: usize },
    NoObjective,
    StartMarginViolated { constraint: usize, value: f64, required: f64 },
    NonPositiveMargin(f64),
    NonPositiveValueBound(f64),
    NonPositiveDiameter(f64),
    NegativeConstant { function: usize, which: &'static str, value: f64 },
    GradientCheckFailed { function: usize, relative_error: f64 },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: x0 has {found} entries, expected {expected}")
            }
            Diagnostic::NoObjective => write!(f, "no objective function"),
            Diagnostic::StartMarginViolated {
                constraint,
                value,
                required,
            } => write!(
                f,
                "start margin violated: f{constraint}(x0) = {value} > -{required}"
            ),
            Diagnostic::NonPositiveMargin(b) => write!(f, "start margin must be positive, got {b}"),
            Diagnostic::NonPositiveValueBound(b) => {
                write!(f, "value bound must be positive, got {b}")
            }
            Diagnostic::NonPositiveDiameter(r) => write!(f, "diameter must be positive, got {r}"),
            Diagnostic::NegativeConstant {
                function,
                which,
                value,
            } => write!(f, "{which} constant of f{function} is negative: {value}"),
            Diagnostic::GradientCheckFailed {
                function,
                relative_error,
            } => write!(
                f,
                "gradient check failed: f{function} relative error {relative_error:.3e} at x0"
            ),
        }
    }
}

/// Finite-difference step used by the gradient consistency check.
pub fn fd_step(x: &[f64]) -> f64 {
    1e-6 * (1.0 + norm(x))
}

/// Relative error between an analytic gradient and central differences at `x`.
pub fn gradient_relative_error(function: &Function, x: &[f64]) -> Option<f64> {
    let grad = function.gradient.as_ref()?(x);
    let fd = central_difference(|p| (function.value)(p), x, fd_step(x));
    let diff: f64 = grad
        .iter()
        .zip(&fd)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let scale = norm(&grad).max(norm(&fd));
    Some(if scale == 0.0 { 0.0 } else { diff / scale })
}

pub fn validate_problem(spec: &ProblemSpec) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if spec.functions.is_empty() {
        out.push(Diagnostic::NoObjective);
        return out;
    }
    if spec.x0.len() != spec.dim {
        out.push(Diagnostic::DimensionMismatch {
            expected: spec.dim,
            found: spec.x0.len(),
        });
        return out;
    }
    if !(spec.start_margin > 0.0) {
        out.push(Diagnostic::NonPositiveMargin(spec.start_margin));
    }
    if !(spec.value_bound > 0.0) {
        out.push(Diagnostic::NonPositiveValueBound(spec.value_bound));
    }
    if !(spec.diameter > 0.0) {
        out.push(Diagnostic::NonPositiveDiameter(spec.diameter));
    }
    for (i, f) in spec.functions.iter().enumerate() {
        if !(f.smoothness >= 0.0) {
            out.push(Diagnostic::NegativeConstant {
                function: i,
                which: "smoothness",
                value: f.smoothness,
            });
        }
        if !(f.lipschitz >= 0.0) {
            out.push(Diagnostic::NegativeConstant {
                function: i,
                which: "Lipschitz",
                value: f.lipschitz,
            });
        }
    }
    for i in 1..spec.functions.len() {
        let value = spec.value(i, &spec.x0);
        if !(value <= -spec.start_margin) || value >= 0.0 {
            out.push(Diagnostic::StartMarginViolated {
                constraint: i,
                value,
                required: spec.start_margin,
            });
        }
    }
    for (i, f) in spec.functions.iter().enumerate() {
        if let Some(err) = gradient_relative_error(f, &spec.x0) {
            if !(err <= GRADIENT_CHECK_TOL) {
                out.push(Diagnostic::GradientCheckFailed {
                    function: i,
                    relative_error: err,
                });
            }
        }
    }
    out
}

/// η-approximate KKT certificate at a strictly feasible point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktCertificate {
    pub x: Vec<f64>,
    pub eta: f64,
    /// `λⁱ = η / (−fⁱ(x))`.
    pub lambda: Vec<f64>,
    /// `‖∇f⁰(x) + Σ λⁱ ∇fⁱ(x)‖`.
    pub stationarity: f64,
    /// `λⁱ · (−fⁱ(x))`.
    pub complementarity: Vec<f64>,
}

/// Builds the certificate from exact gradients. Fails when the spec has no
/// gradients or `x` is not strictly feasible.
pub fn kkt_certificate(spec: &ProblemSpec, x: &[f64], eta: f64) -> Result<KktCertificate> {
    if !spec.has_gradients() {
        return Err(Error::Precondition(
            "kkt_certificate needs exact gradients; use kkt_certificate_with".into(),
        ));
    }
    let grads: Vec<Vec<f64>> = (0..spec.functions.len())
        .map(|i| spec.gradient(i, x).expect("checked above"))
        .collect();
    kkt_certificate_with(spec, x, eta, &grads)
}

/// Builds the certificate from caller-supplied gradients (e.g. zeroth-order
/// estimates), one per function.
pub fn kkt_certificate_with(
    spec: &ProblemSpec,
    x: &[f64],
    eta: f64,
    grads: &[Vec<f64>],
) -> Result<KktCertificate> {
    if grads.len() != spec.functions.len() {
        return Err(Error::Precondition(format!(
            "expected {} gradients, got {}",
            spec.functions.len(),
            grads.len()
        )));
    }
    let m = spec.num_constraints();
    let mut lambda = Vec::with_capacity(m);
    let mut complementarity = Vec::with_capacity(m);
    let mut lagrangian_grad = grads[0].clone();
    for i in 1..=m {
        let value = spec.value(i, x);
        if !(value < 0.0) {
            return Err(Error::Infeasible { index: i, value });
        }
        let slack = -value;
        let lam = eta / slack;
        crate::vecops::axpy(lam, &grads[i], &mut lagrangian_grad);
        lambda.push(lam);
        complementarity.push(lam * slack);
    }
    Ok(KktCertificate {
        x: x.to_vec(),
        eta,
        lambda,
        stationarity: norm(&lagrangian_grad),
        complementarity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Nonconvex,
    Convex,
    StronglyConvex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    FirstOrder,
    ZerothOrder,
}

fn default_trunc_a() -> f64 {
    1e-8
}

fn default_delta_hat() -> f64 {
    0.05
}

fn default_max_queries() -> u64 {
    u64::MAX
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Initial barrier parameter `η₀`.
    pub eta0: f64,
    /// Target barrier parameter; equal to `eta0` for a single fixed-η run.
    pub eta_final: f64,
    /// Barrier reduction rate `ω` per restart round.
    pub omega: f64,
    /// Iterations per η value (`T_k`).
    pub steps_per_round: usize,
    /// Oracle samples averaged per iteration (`n`).
    pub batch_size: usize,
    #[serde(default = "default_delta_hat")]
    pub delta_hat: f64,
    #[serde(default = "default_trunc_a")]
    pub trunc_a: f64,
    pub mode: Mode,
    pub oracle_kind: OracleKind,
    /// Fixed sampling radius for the zeroth-order oracle. It is still capped
    /// by the radius that keeps samples feasible.
    #[serde(default)]
    pub nu_override: Option<f64>,
    #[serde(default = "default_max_queries")]
    pub max_total_queries: u64,
    #[serde(default)]
    pub seed: u64,
}

impl SolverConfig {
    /// A single-round configuration at fixed `eta`.
    pub fn fixed(eta: f64, steps: usize, batch_size: usize, mode: Mode, oracle_kind: OracleKind) -> Self {
        SolverConfig {
            eta0: eta,
            eta_final: eta,
            omega: 0.5,
            steps_per_round: steps,
            batch_size,
            delta_hat: default_delta_hat(),
            trunc_a: default_trunc_a(),
            mode,
            oracle_kind,
            nu_override: None,
            max_total_queries: default_max_queries(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.eta_final > 0.0 && self.eta_final <= self.eta0) {
            return fail(format!(
                "need 0 < eta_final <= eta0, got eta_final={} eta0={}",
                self.eta_final, self.eta0
            ));
        }
        if !(self.omega > 0.0 && self.omega < 1.0) {
            return fail(format!("omega must lie in (0,1), got {}", self.omega));
        }
        if !(self.delta_hat > 0.0 && self.delta_hat < 1.0) {
            return fail(format!("delta_hat must lie in (0,1), got {}", self.delta_hat));
        }
        if !(self.trunc_a > 0.0) {
            return fail(format!("trunc_a must be positive, got {}", self.trunc_a));
        }
        if self.steps_per_round == 0 || self.batch_size == 0 || self.max_total_queries == 0 {
            return fail("steps_per_round, batch_size and max_total_queries must be positive".into());
        }
        if let Some(nu) = self.nu_override {
            if !(nu > 0.0) {
                return fail(format!("nu_override must be positive, got {nu}"));
            }
        }
        Ok(())
    }
}
