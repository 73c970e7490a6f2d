//! Log-barrier quantities computed once per iteration.
//!
//! The order mirrors one solver step: the barrier gradient estimate from a
//! batch, confidence bounds on slacks and directional derivatives, the local
//! smoothness estimate `M̂₂`, and finally the safe step size. Everything here is
//! a pure function of its inputs.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::oracle::BatchEstimate;
use crate::problem::ProblemSpec;
use crate::vecops::{axpy, dot, norm};

/// Per-iteration barrier quantities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarrierState {
    pub eta: f64,
    /// Truncated measured slacks `ᾱⁱ = max(−Fⁱ_n, a)`.
    pub alpha_bar: Vec<f64>,
    /// Slack lower confidence bounds `α̲ⁱ`, clamped at the truncation level.
    pub alpha_lower: Vec<f64>,
    /// Upper bounds `θ̂ⁱ` on `|⟨∇fⁱ, g/‖g‖⟩|`.
    pub theta_hat: Vec<f64>,
    pub g: Vec<f64>,
    pub g_norm: f64,
    pub m2_hat: f64,
    pub gamma: f64,
    pub delta_step: f64,
    pub deviation_bound: f64,
    pub near_boundary: bool,
}

impl BarrierState {
    /// Runs the full per-iteration pipeline on one batch.
    pub fn compute(
        batch: &BatchEstimate,
        spec: &ProblemSpec,
        eta: f64,
        trunc_a: f64,
        delta_step: f64,
    ) -> Self {
        let (g, alpha_bar) = barrier_gradient(batch, eta, trunc_a);
        let g_norm = norm(&g);
        let bounds = confidence_bounds(batch, &alpha_bar, &g, delta_step, trunc_a);
        let m2_hat = m2_estimate(spec, eta, &bounds.alpha_lower, &bounds.theta_hat);
        let gamma = step_size(&bounds.alpha_lower, &bounds.theta_hat, spec, m2_hat, g_norm);
        let deviation =
            deviation_bound(batch, &alpha_bar, &bounds.alpha_lower, spec, eta, delta_step);
        BarrierState {
            eta,
            alpha_bar,
            alpha_lower: bounds.alpha_lower,
            theta_hat: bounds.theta_hat,
            g,
            g_norm,
            m2_hat,
            gamma,
            delta_step,
            deviation_bound: deviation,
            near_boundary: bounds.near_boundary,
        }
    }
}

/// `B_η = f⁰ − η Σ ln(−fⁱ)` from the values `f⁰..fᵐ`.
pub fn barrier_value(values: &[f64], eta: f64) -> Result<f64> {
    let mut total = values[0];
    for (idx, &v) in values.iter().enumerate().skip(1) {
        if !(v < 0.0) {
            return Err(Error::BarrierDomain { index: idx, value: v });
        }
        total -= eta * (-v).ln();
    }
    Ok(total)
}

#[inline]
pub fn truncate(slack: f64, trunc_a: f64) -> f64 {
    if slack > trunc_a {
        slack
    } else {
        trunc_a
    }
}

/// Barrier gradient estimate `g = G⁰ + η Σ Gⁱ/ᾱⁱ` and the truncated slacks.
pub fn barrier_gradient(batch: &BatchEstimate, eta: f64, trunc_a: f64) -> (Vec<f64>, Vec<f64>) {
    let mut g = batch.grad[0].clone();
    let alpha_bar: Vec<f64> = batch.value[1..]
        .iter()
        .map(|v| truncate(-v, trunc_a))
        .collect();
    for (grad_i, alpha) in batch.grad[1..].iter().zip(&alpha_bar) {
        axpy(eta / alpha, grad_i, &mut g);
    }
    (g, alpha_bar)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceBounds {
    pub alpha_lower: Vec<f64>,
    pub theta_hat: Vec<f64>,
    /// Set when any lower bound had to be clamped at the truncation level.
    pub near_boundary: bool,
}

/// `√ln(1/δ)`.
#[inline]
pub fn confidence_factor(delta: f64) -> f64 {
    (1.0 / delta).ln().sqrt()
}

/// Lower bounds on slacks and upper bounds on directional derivatives along
/// `g/‖g‖`. A zero `g` contributes no inner-product term.
pub fn confidence_bounds(
    batch: &BatchEstimate,
    alpha_bar: &[f64],
    g: &[f64],
    delta_step: f64,
    trunc_a: f64,
) -> ConfidenceBounds {
    let root_log = confidence_factor(delta_step);
    let g_norm = norm(g);
    let mut near_boundary = false;
    let alpha_lower = alpha_bar
        .iter()
        .zip(&batch.sigma_n[1..])
        .map(|(a, s)| {
            let lower = a - s * root_log;
            if lower <= trunc_a {
                near_boundary = true;
                trunc_a
            } else {
                lower
            }
        })
        .collect();
    let theta_hat = (1..batch.value.len())
        .map(|i| {
            let along = if g_norm > 0.0 {
                dot(&batch.grad[i], g).abs() / g_norm
            } else {
                0.0
            };
            along + batch.b_hat[i] + batch.sigma_hat_n[i] * root_log
        })
        .collect();
    ConfidenceBounds {
        alpha_lower,
        theta_hat,
        near_boundary,
    }
}

/// Local smoothness bound `M₀ + 10η Σ Mᵢ/α̲ⁱ + 8η Σ (θ̂ⁱ/α̲ⁱ)²`.
pub fn m2_estimate(spec: &ProblemSpec, eta: f64, alpha_lower: &[f64], theta_hat: &[f64]) -> f64 {
    let mut curvature = 0.0;
    let mut directional = 0.0;
    for (i, (a, th)) in alpha_lower.iter().zip(theta_hat).enumerate() {
        curvature += spec.smoothness(i + 1) / a;
        directional += (th / a) * (th / a);
    }
    spec.smoothness(0) + 10.0 * eta * curvature + 8.0 * eta * directional
}

/// Largest step keeping every constraint within half its current value,
/// capped at `1/M̂₂`.
pub fn step_size(
    alpha_lower: &[f64],
    theta_hat: &[f64],
    spec: &ProblemSpec,
    m2_hat: f64,
    g_norm: f64,
) -> f64 {
    if g_norm == 0.0 {
        return 0.0;
    }
    let cap = 1.0 / m2_hat;
    let mut safe = f64::INFINITY;
    for (i, (a, th)) in alpha_lower.iter().zip(theta_hat).enumerate() {
        let denom = 2.0 * th.abs() + (a * spec.smoothness(i + 1)).sqrt();
        // zero denominator: linear constraint with no slope along g, no cap
        if denom > 0.0 {
            safe = safe.min(a / denom);
        }
    }
    (safe / g_norm).min(cap)
}

/// High-probability bound on `‖g − ∇B_η‖`, with `α̲` standing in for the
/// unknown true slack.
pub fn deviation_bound(
    batch: &BatchEstimate,
    alpha_bar: &[f64],
    alpha_lower: &[f64],
    spec: &ProblemSpec,
    eta: f64,
    delta_step: f64,
) -> f64 {
    let root_log = confidence_factor(delta_step);
    let mut total = batch.b_hat[0] + batch.sigma_hat_n[0] * root_log;
    for i in 1..batch.value.len() {
        let (a_bar, a_low) = (alpha_bar[i - 1], alpha_lower[i - 1]);
        total += eta / a_bar * (batch.b_hat[i] + batch.sigma_hat_n[i] * root_log);
        total += spec.lipschitz(i) * eta * batch.sigma_n[i] / (a_low * a_bar) * root_log;
    }
    total
}

/// Diagnostic constants `c` (slack floor `α̲ ≥ cη`) and `C` (step floor `γ ≥ Cη`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepFloor {
    pub c: f64,
    #[serde(rename = "C")]
    pub big_c: f64,
}

/// Requires MFCQ metadata; returns `None` ("unavailable") without it.
pub fn step_floor_constants(spec: &ProblemSpec, eta: f64) -> Option<StepFloor> {
    let mfcq = spec.mfcq?;
    let m = spec.num_constraints() as f64;
    let l_max = spec.max_lipschitz();
    let m_max = spec.max_smoothness();
    let c = 0.5 * (mfcq.l / (4.0 * l_max * (2.0 * m + 1.0))).powf(m);
    let l2 = l_max * l_max;
    let ratio = m_max * c * eta / l2;
    let denom = (4.0 + 5.0 * ratio).max(1.0 + (ratio / 4.0).sqrt());
    let big_c = c / (2.0 * l2 * (1.0 + m / c)) / denom;
    Some(StepFloor { c, big_c })
}

/// Objective gap `ε` implied by an η-approximate barrier minimizer on a
/// convex problem. Requires `η ≤ β/2`.
pub fn convex_gap_bound(spec: &ProblemSpec, eta: f64) -> Result<f64> {
    let beta = spec.start_margin;
    if !(eta > 0.0 && eta <= beta / 2.0) {
        return Err(Error::Precondition(format!(
            "convex gap bound needs 0 < eta <= beta/2 (eta={eta}, beta={beta})"
        )));
    }
    let m = spec.num_constraints() as f64;
    if m == 0.0 {
        return Ok(eta);
    }
    let arg = 2.0 * m * spec.max_lipschitz() * spec.diameter * spec.value_bound / (eta * beta);
    Ok(eta * (m + 1.0) + eta * m * arg.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{make_gaussian_ellipsoid, make_quadratic_linear, make_rosenbrock};
    use crate::oracle::{first_order_batch, rng_from_seed, NoiseModel};
    use crate::problem::{Function, Mfcq};
    use crate::vecops::central_difference;
    use proptest::prelude::*;

    fn one_constraint(m0: f64, m1: f64) -> ProblemSpec {
        ProblemSpec {
            name: "toy".into(),
            dim: 2,
            functions: vec![
                Function::new(|x| x[0]).with_constants(m0, 1.0),
                Function::new(|x| x[1] - 1.0).with_constants(m1, 1.0),
            ],
            diameter: 1.0,
            x0: vec![0.0, 0.0],
            start_margin: 0.5,
            value_bound: 1.0,
            mfcq: None,
        }
    }

    fn batch(value: Vec<f64>, grad: Vec<Vec<f64>>) -> BatchEstimate {
        let k = value.len();
        BatchEstimate {
            value,
            grad,
            sigma_n: vec![0.0; k],
            sigma_hat_n: vec![0.0; k],
            b_hat: vec![0.0; k],
            queries_used: k as u64,
            sample_points: vec![vec![0.0, 0.0]],
        }
    }

    #[test]
    fn barrier_value_cases() {
        assert_eq!(barrier_value(&[3.5], 0.2).unwrap(), 3.5);
        assert_eq!(barrier_value(&[0.0, -1.0], 0.7).unwrap(), 0.0);
        let v = barrier_value(&[1.0, -0.5], 0.1).unwrap();
        assert!((v - (1.0 + 0.1 * 2f64.ln())).abs() < 1e-15);
        assert!((v - 1.0693147).abs() < 1e-7);
        assert!(matches!(
            barrier_value(&[1.0, -0.5, 0.0], 0.1),
            Err(Error::BarrierDomain { index: 2, .. })
        ));
    }

    #[test]
    fn gradient_without_constraints_is_objective_gradient() {
        let b = batch(vec![1.0], vec![vec![0.3, -0.4]]);
        let (g, alpha) = barrier_gradient(&b, 0.5, 1e-8);
        assert_eq!(g, vec![0.3, -0.4]);
        assert!(alpha.is_empty());
    }

    #[test]
    fn gradient_matches_symbolic_form_on_box() {
        // ∇B_η = ∇f⁰ + η Σ aᵢ/(b − ⟨aᵢ,x⟩) with A = [I; −I], written out.
        let spec = make_quadratic_linear(2).unwrap();
        let eta = 0.05;
        let x = [0.0, 0.0];
        let noise = NoiseModel::noiseless(spec.functions.len());
        let b = first_order_batch(&spec, &noise, &x, 1, &mut rng_from_seed(0));
        let (g, _) = barrier_gradient(&b, eta, 1e-8);
        let slack = 1.0 / 2f64.sqrt();
        // at the origin the ±eᵢ terms cancel
        let expected = [(0.0 - 2.0) / 4.0 + eta / slack - eta / slack; 2];
        for k in 0..2 {
            assert!((g[k] - expected[k]).abs() <= 1e-12 * expected[k].abs());
        }
    }

    #[test]
    fn truncation_clamps_bad_slack() {
        let b = batch(vec![0.0, 0.003], vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let (g, alpha) = barrier_gradient(&b, 0.1, 1e-8);
        assert_eq!(alpha, vec![1e-8]);
        assert!(g.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn noiseless_bounds_are_plain_values() {
        let b = batch(
            vec![0.0, -0.2, -0.4],
            vec![vec![1.0, 1.0], vec![0.0, 2.0], vec![3.0, 0.0]],
        );
        let (g, alpha) = barrier_gradient(&b, 0.1, 1e-8);
        let bounds = confidence_bounds(&b, &alpha, &g, 0.01, 1e-8);
        assert_eq!(bounds.alpha_lower, alpha);
        assert!(!bounds.near_boundary);
        let gn = norm(&g);
        assert!((bounds.theta_hat[0] - (2.0 * g[1] / gn).abs()).abs() < 1e-15);
        assert!((bounds.theta_hat[1] - (3.0 * g[0] / gn).abs()).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_constraint_has_zero_theta() {
        let b = batch(vec![0.0, -0.3], vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let bounds = confidence_bounds(&b, &[0.3], &[1.0, 0.0], 0.01, 1e-8);
        assert_eq!(bounds.theta_hat, vec![0.0]);
    }

    #[test]
    fn lower_bound_arithmetic() {
        let mut b = batch(vec![0.0, -0.1], vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        b.sigma_n = vec![0.0, 0.0005];
        let bounds = confidence_bounds(&b, &[0.1], &[1.0, 0.0], 0.01, 1e-8);
        let expected = 0.1 - 0.0005 * 100f64.ln().sqrt();
        assert!((bounds.alpha_lower[0] - expected).abs() < 1e-15);
        assert!((bounds.alpha_lower[0] - 0.0989).abs() < 1e-4);
        assert!((100f64.ln().sqrt() - 2.1460).abs() < 1e-4);
    }

    #[test]
    fn lower_bound_clamps_and_flags() {
        let mut b = batch(vec![0.0, -0.001], vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        b.sigma_n = vec![0.0, 0.01];
        let bounds = confidence_bounds(&b, &[0.001], &[1.0, 0.0], 0.01, 1e-8);
        assert_eq!(bounds.alpha_lower, vec![1e-8]);
        assert!(bounds.near_boundary);
    }

    #[test]
    fn m2_cases() {
        let spec = one_constraint(1.0, 1.0);
        let m0_only = ProblemSpec {
            functions: vec![spec.functions[0].clone()],
            ..spec.clone()
        };
        assert_eq!(m2_estimate(&m0_only, 0.3, &[], &[]), 1.0);
        let v = m2_estimate(&spec, 0.1, &[0.5], &[1.0]);
        assert!((v - 6.2).abs() < 1e-12);
        let full = m2_estimate(&spec, 0.1, &[0.5], &[0.0]) - 1.0;
        let half = m2_estimate(&spec, 0.1, &[0.25], &[0.0]) - 1.0;
        assert!((half - 2.0 * full).abs() < 1e-12);
    }

    #[test]
    fn step_size_cases() {
        let linear = one_constraint(1.0, 0.0);
        assert!((step_size(&[0.1], &[1.0], &linear, 1.0, 1.0) - 0.05).abs() < 1e-15);
        assert_eq!(step_size(&[0.1], &[1.0], &linear, 1.0, 0.0), 0.0);
        let curved = one_constraint(1.0, 4.0);
        let gamma = step_size(&[0.09], &[0.3], &curved, 100.0, 2.0);
        assert!((gamma - 0.01).abs() < 1e-15);
        // with a loose cap the slack term is active: 0.09/1.2/2
        let gamma = step_size(&[0.09], &[0.3], &curved, 1.0, 2.0);
        assert!((gamma - 0.0375).abs() < 1e-15);
        let unconstrained = ProblemSpec {
            functions: vec![linear.functions[0].clone()],
            ..linear.clone()
        };
        assert_eq!(step_size(&[], &[], &unconstrained, 4.0, 3.0), 0.25);
        // flat linear constraint imposes no cap
        assert_eq!(step_size(&[0.1], &[0.0], &linear, 2.0, 1.0), 0.5);
    }

    #[test]
    fn deviation_cases() {
        let spec = one_constraint(1.0, 1.0);
        let b = batch(vec![0.0, -0.5], vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(deviation_bound(&b, &[0.5], &[0.5], &spec, 0.1, 0.01), 0.0);

        let m0_only = ProblemSpec {
            functions: vec![spec.functions[0].clone()],
            ..spec.clone()
        };
        let mut b0 = batch(vec![0.0], vec![vec![1.0, 0.0]]);
        b0.sigma_hat_n = vec![0.01];
        let v = deviation_bound(&b0, &[], &[], &m0_only, 0.1, 0.01);
        assert!((v - 0.02146).abs() < 1e-5);

        let mut b = b.clone();
        b.sigma_n = vec![0.0, 0.01];
        b.sigma_hat_n = vec![0.02, 0.03];
        b.b_hat = vec![0.001, 0.002];
        let objective = 0.001 + 0.02 * confidence_factor(0.01);
        let at = |eta| deviation_bound(&b, &[0.5], &[0.45], &spec, eta, 0.01) - objective;
        assert!((at(0.2) - 2.0 * at(0.1)).abs() < 1e-14);
    }

    #[test]
    fn step_floor_constants_cases() {
        let mut spec = one_constraint(1.0, 1.0);
        assert!(step_floor_constants(&spec, 0.1).is_none());
        let l = spec.max_lipschitz();
        spec.mfcq = Some(Mfcq { l, rho: 0.1 });
        let floor = step_floor_constants(&spec, 0.1).unwrap();
        assert!((floor.c - 1.0 / 24.0).abs() < 1e-15);
        assert!(floor.big_c > 0.0);
        let unconstrained = ProblemSpec {
            functions: vec![spec.functions[0].clone()],
            ..spec.clone()
        };
        assert_eq!(step_floor_constants(&unconstrained, 0.1).unwrap().c, 0.5);
    }

    #[test]
    fn convex_gap_cases() {
        let spec = one_constraint(1.0, 1.0);
        let eps = convex_gap_bound(&spec, 0.01).unwrap();
        assert!((eps - (0.02 + 0.01 * 400f64.ln())).abs() < 1e-15);
        assert!((eps - 0.0799).abs() < 1e-4);
        assert!(convex_gap_bound(&spec, 0.3).is_err());
        let unconstrained = ProblemSpec {
            functions: vec![spec.functions[0].clone()],
            ..spec.clone()
        };
        assert_eq!(convex_gap_bound(&unconstrained, 0.2).unwrap(), 0.2);
        // monotone on (0, β/2]
        let grid: Vec<f64> = (1..=250).map(|k| k as f64 * 0.001).collect();
        let vals: Vec<f64> = grid.iter().map(|&e| convex_gap_bound(&spec, e).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] > w[0]));
    }

    fn fd_check(spec: &ProblemSpec, x: &[f64], eta: f64) {
        let noise = NoiseModel::noiseless(spec.functions.len());
        let b = first_order_batch(spec, &noise, x, 1, &mut rng_from_seed(0));
        let (g, _) = barrier_gradient(&b, eta, 1e-300);
        let h = 1e-6 * (1.0 + norm(x));
        let fd = central_difference(|p| barrier_value(&spec.values(p), eta).unwrap(), x, h);
        let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
        assert!(norm(&diff) <= 1e-6 * norm(&g), "{g:?} vs {fd:?}");
    }

    #[test]
    fn noiseless_gradient_matches_finite_differences() {
        fd_check(&make_quadratic_linear(3).unwrap(), &[0.1, -0.3, 0.2], 0.1);
        fd_check(&make_rosenbrock(2).unwrap(), &[-0.03, -0.02], 0.05);
        fd_check(&make_gaussian_ellipsoid(3, 0.5).unwrap(), &[0.2, 0.3, 0.1], 0.02);
    }

    proptest! {
        #[test]
        fn step_monotone_in_bounds(
            a in 0.01f64..1.0, da in 0.0f64..1.0,
            th in 0.0f64..5.0, dth in 0.0f64..5.0,
            m1 in 0.0f64..10.0, gn in 0.01f64..10.0, m2 in 0.1f64..100.0,
        ) {
            let spec = one_constraint(1.0, m1);
            let base = step_size(&[a], &[th], &spec, m2, gn);
            prop_assert!(base * m2 <= 1.0 + 1e-15);
            prop_assert!(step_size(&[a + da], &[th], &spec, m2, gn) >= base);
            prop_assert!(step_size(&[a], &[th + dth], &spec, m2, gn) <= base);
        }

        #[test]
        fn gradient_is_affine_in_eta(
            v1 in -1.0f64..-0.01, v2 in -1.0f64..-0.01, eta in 0.001f64..1.0,
            g in proptest::collection::vec(-3.0f64..3.0, 6),
        ) {
            let b = batch(vec![0.0, v1, v2], vec![g[0..2].to_vec(), g[2..4].to_vec(), g[4..6].to_vec()]);
            let (g1, _) = barrier_gradient(&b, eta, 1e-8);
            let (g2, _) = barrier_gradient(&b, 2.0 * eta, 1e-8);
            for k in 0..2 {
                let lhs = g2[k] - b.grad[0][k];
                let rhs = 2.0 * (g1[k] - b.grad[0][k]);
                prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            }
        }
    }
}
