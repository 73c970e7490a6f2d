//! Stochastic oracles with batch averaging.
//!
//! Two estimators are provided over a [`ProblemSpec`]: a first-order oracle that
//! perturbs exact values and gradients with Gaussian noise, and the two-point
//! zeroth-order estimator that differences noisy values along uniformly
//! sampled unit-sphere directions. Both report the noise levels the barrier
//! module needs for its confidence bounds.

use rand::Rng as _;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::problem::ProblemSpec;
use crate::vecops::norm;

/// Seeded generator used by every stochastic component.
pub type Rng = ChaCha8Rng;

/// Lower clamp on the sampling radius.
pub const NU_FLOOR: f64 = 1e-12;

/// Noise scales per function `f⁰..fᵐ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Value-noise standard deviations `σᵢ`.
    pub sigma: Vec<f64>,
    /// Gradient-noise scales `σ̂ᵢ` (first-order only): total vector std.
    pub sigma_hat: Vec<f64>,
    /// Gradient bias bounds `b̂ᵢ` for the first-order oracle.
    pub b_hat: Vec<f64>,
}

impl NoiseModel {
    pub fn noiseless(num_functions: usize) -> Self {
        Self::uniform(num_functions, 0.0, 0.0)
    }

    pub fn uniform(num_functions: usize, sigma: f64, sigma_hat: f64) -> Self {
        NoiseModel {
            sigma: vec![sigma; num_functions],
            sigma_hat: vec![sigma_hat; num_functions],
            b_hat: vec![0.0; num_functions],
        }
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn is_valid(&self) -> bool {
        let n = self.sigma.len();
        self.sigma_hat.len() == n
            && self.b_hat.len() == n
            && self
                .sigma
                .iter()
                .chain(&self.sigma_hat)
                .chain(&self.b_hat)
                .all(|v| *v >= 0.0 && v.is_finite())
    }
}

/// Batch-averaged oracle output at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchEstimate {
    /// `Fⁱ_n(x)` batch means.
    pub value: Vec<f64>,
    /// `Gⁱ_n(x)` batch means.
    pub grad: Vec<Vec<f64>>,
    /// `σᵢ(n)`.
    pub sigma_n: Vec<f64>,
    /// `σ̂ᵢ(n)`.
    pub sigma_hat_n: Vec<f64>,
    /// Current gradient bias bounds.
    pub b_hat: Vec<f64>,
    /// Raw oracle calls consumed.
    pub queries_used: u64,
    /// Every point at which a value was queried; the center comes first.
    pub sample_points: Vec<Vec<f64>>,
}

impl BatchEstimate {
    pub fn num_constraints(&self) -> usize {
        self.value.len().saturating_sub(1)
    }
}

/// Anything that can return a [`BatchEstimate`] at a point.
pub trait BatchOracle: Send + Sync {
    /// Number of functions `m + 1`.
    fn num_functions(&self) -> usize;

    /// Whether queries are spread over a sampling radius `ν` around `x`.
    fn uses_sampling_radius(&self) -> bool {
        false
    }

    /// Raw oracle calls a batch of size `n` will consume.
    fn batch_cost(&self, n: usize) -> u64;

    fn query(&self, x: &[f64], n: usize, nu: f64, rng: &mut Rng) -> BatchEstimate;
}

/// Gaussian-perturbed exact values and gradients.
#[derive(Clone, Debug)]
pub struct FirstOrderOracle {
    pub spec: ProblemSpec,
    pub noise: NoiseModel,
}

impl BatchOracle for FirstOrderOracle {
    fn num_functions(&self) -> usize {
        self.spec.functions.len()
    }

    fn batch_cost(&self, n: usize) -> u64 {
        (n * self.spec.functions.len()) as u64
    }

    fn query(&self, x: &[f64], n: usize, _nu: f64, rng: &mut Rng) -> BatchEstimate {
        first_order_batch(&self.spec, &self.noise, x, n, rng)
    }
}

/// Two-point finite differences along random unit-sphere directions.
#[derive(Clone, Debug)]
pub struct ZerothOrderOracle {
    pub spec: ProblemSpec,
    pub noise: NoiseModel,
}

impl BatchOracle for ZerothOrderOracle {
    fn num_functions(&self) -> usize {
        self.spec.functions.len()
    }

    fn uses_sampling_radius(&self) -> bool {
        true
    }

    fn batch_cost(&self, n: usize) -> u64 {
        (2 * n * self.spec.functions.len()) as u64
    }

    fn query(&self, x: &[f64], n: usize, nu: f64, rng: &mut Rng) -> BatchEstimate {
        zo_batch(&self.spec, &self.noise, x, nu, n, rng)
    }
}

#[inline]
fn gaussian(rng: &mut Rng, std: f64) -> f64 {
    if std == 0.0 {
        0.0
    } else {
        let z: f64 = StandardNormal.sample(rng);
        std * z
    }
}

/// Uniform direction on the unit sphere in `R^d` (normalized Gaussian vector).
pub fn sample_sphere(d: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let len = norm(&v);
        if len > 1e-300 {
            return v.into_iter().map(|c| c / len).collect();
        }
    }
}

/// First-order batch: `n` noisy value/gradient pairs per function, averaged.
///
/// # Panics
///
/// Panics if the spec has no gradients or `n == 0`.
pub fn first_order_batch(
    spec: &ProblemSpec,
    noise: &NoiseModel,
    x: &[f64],
    n: usize,
    rng: &mut Rng,
) -> BatchEstimate {
    assert!(n > 0, "batch size must be positive");
    let k = spec.functions.len();
    let d = spec.dim;
    let per_coord = 1.0 / (d as f64).sqrt();
    let mut value = Vec::with_capacity(k);
    let mut grad = Vec::with_capacity(k);
    for i in 0..k {
        let exact = spec.value(i, x);
        let exact_grad = spec
            .gradient(i, x)
            .expect("first-order oracle requires gradients");
        let (sigma, sigma_hat) = (noise.sigma[i], noise.sigma_hat[i] * per_coord);
        // noise is averaged separately so a noiseless batch is exact
        let mut v_noise = 0.0;
        let mut g_noise = vec![0.0; d];
        for _ in 0..n {
            v_noise += gaussian(rng, sigma);
            for acc in g_noise.iter_mut() {
                *acc += gaussian(rng, sigma_hat);
            }
        }
        let inv = 1.0 / n as f64;
        value.push(exact + v_noise * inv);
        grad.push(exact_grad.iter().zip(g_noise).map(|(g, e)| g + e * inv).collect());
    }
    let root_n = (n as f64).sqrt();
    BatchEstimate {
        value,
        grad,
        sigma_n: noise.sigma.iter().map(|s| s / root_n).collect(),
        sigma_hat_n: noise.sigma_hat.iter().map(|s| s / root_n).collect(),
        b_hat: noise.b_hat.clone(),
        queries_used: (n * k) as u64,
        sample_points: vec![x.to_vec()],
    }
}

/// Upper bound on `E‖G_{ν,n} − ∇f_ν‖²` for the two-point estimator, with the
/// Lipschitz constant standing in for the unknown gradient norm.
pub fn zo_variance_bound(d: usize, n: usize, lipschitz: f64, smoothness: f64, sigma: f64, nu: f64) -> f64 {
    let (d, n) = (d as f64, n as f64);
    3.0 / n * (d * lipschitz * lipschitz + d * d * smoothness * smoothness * nu * nu / 4.0)
        + 4.0 * d * d * sigma * sigma / (n * nu * nu)
}

/// Two-point zeroth-order batch with sampling radius `nu`.
///
/// # Panics
///
/// Panics if `n == 0` or `nu` is not positive.
pub fn zo_batch(
    spec: &ProblemSpec,
    noise: &NoiseModel,
    x: &[f64],
    nu: f64,
    n: usize,
    rng: &mut Rng,
) -> BatchEstimate {
    assert!(n > 0, "batch size must be positive");
    assert!(nu > 0.0, "sampling radius must be positive");
    let k = spec.functions.len();
    let d = spec.dim;
    let center = spec.values(x);
    let mut value_sum = vec![0.0; k];
    let mut grad = vec![vec![0.0; d]; k];
    let mut sample_points = Vec::with_capacity(n + 1);
    sample_points.push(x.to_vec());
    let weight = d as f64 / (n as f64 * nu);
    let mut probe = vec![0.0; d];
    for _ in 0..n {
        let s = sample_sphere(d, rng);
        for ((p, xi), si) in probe.iter_mut().zip(x).zip(&s) {
            *p = xi + nu * si;
        }
        for i in 0..k {
            let plus = spec.value(i, &probe) + gaussian(rng, noise.sigma[i]);
            let minus = center[i] + gaussian(rng, noise.sigma[i]);
            value_sum[i] += minus;
            let coef = weight * (plus - minus);
            for (g, si) in grad[i].iter_mut().zip(&s) {
                *g += coef * si;
            }
        }
        sample_points.push(probe.clone());
    }
    let root_n = (n as f64).sqrt();
    BatchEstimate {
        value: value_sum.into_iter().map(|v| v / n as f64).collect(),
        grad,
        sigma_n: noise.sigma.iter().map(|s| s / root_n).collect(),
        sigma_hat_n: (0..k)
            .map(|i| {
                zo_variance_bound(d, n, spec.lipschitz(i), spec.smoothness(i), noise.sigma[i], nu).sqrt()
            })
            .collect(),
        b_hat: (0..k).map(|i| nu * spec.smoothness(i)).collect(),
        queries_used: (2 * n * k) as u64,
        sample_points,
    }
}

/// Radius at which every sphere sample stays feasible: `fⁱ(x + νs) ≤ 0`
/// whenever the slack is at least `α̲ᵢ` and `‖∇fⁱ‖ ≤ grad_norm_est[i]`.
/// Infinite when no constraint limits it.
pub fn feasible_sampling_radius(alpha_lower: &[f64], grad_norm_est: &[f64], spec: &ProblemSpec) -> f64 {
    let mut nu = f64::INFINITY;
    for (i, (&a, &g)) in alpha_lower.iter().zip(grad_norm_est).enumerate() {
        let denom = 2.0 * g + (a * spec.smoothness(i + 1)).sqrt();
        if denom > 0.0 {
            nu = nu.min(a / denom);
        }
    }
    nu
}

/// Largest sampling radius that keeps every sphere sample strictly feasible
/// and the estimator bias small relative to the slacks and `η`.
///
/// `alpha_lower[i]` and `grad_norm_est[i]` refer to constraint `i + 1`. Terms
/// with a zero denominator are dropped; if every term drops, `eta` is used.
pub fn safe_sampling_radius(
    alpha_lower: &[f64],
    grad_norm_est: &[f64],
    spec: &ProblemSpec,
    eta: f64,
) -> f64 {
    let m = spec.num_constraints();
    debug_assert_eq!(alpha_lower.len(), m);
    debug_assert_eq!(grad_norm_est.len(), m);
    let mm = m.max(1) as f64;
    let r = spec.diameter;
    let mut nu = feasible_sampling_radius(alpha_lower, grad_norm_est, spec);
    for i in 0..m {
        let a = alpha_lower[i];
        let mi = spec.smoothness(i + 1);
        if mi > 0.0 {
            nu = nu.min(a / (2.0 * mm * mi * r));
        }
    }
    let m0 = spec.smoothness(0);
    if m0 > 0.0 {
        nu = nu.min(eta / (2.0 * mm * m0));
    }
    if !nu.is_finite() {
        nu = eta;
    }
    nu.max(NU_FLOOR)
}

/// Seeded generator for run `seed`.
pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw in `[0, 1)`.
pub fn uniform01(rng: &mut Rng) -> f64 {
    rng.random::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{make_gaussian_ellipsoid, make_quadratic_linear};
    use crate::problem::Function;

    fn squared_norm(d: usize) -> ProblemSpec {
        ProblemSpec {
            name: "sq".into(),
            dim: d,
            functions: vec![Function::new(|x| x.iter().map(|v| v * v).sum())
                .with_gradient(|x| x.iter().map(|v| 2.0 * v).collect())
                .with_constants(2.0, 4.0)],
            diameter: 2.0,
            x0: vec![0.0; d],
            start_margin: 1.0,
            value_bound: 1.0,
            mfcq: None,
        }
    }

    fn linear(a: Vec<f64>) -> ProblemSpec {
        let d = a.len();
        let a2 = a.clone();
        ProblemSpec {
            name: "lin".into(),
            dim: d,
            functions: vec![Function::new(move |x| crate::vecops::dot(&a, x))
                .with_gradient(move |_| a2.clone())
                .with_constants(0.0, 1.0)],
            diameter: 1.0,
            x0: vec![0.0; d],
            start_margin: 1.0,
            value_bound: 1.0,
            mfcq: None,
        }
    }

    #[test]
    fn noiseless_first_order_is_exact() {
        let spec = make_quadratic_linear(3).unwrap();
        let noise = NoiseModel::noiseless(spec.functions.len());
        let x = [0.1, -0.2, 0.3];
        let batch = first_order_batch(&spec, &noise, &x, 5, &mut rng_from_seed(1));
        for i in 0..spec.functions.len() {
            assert_eq!(batch.value[i], spec.value(i, &x));
            assert_eq!(batch.grad[i], spec.gradient(i, &x).unwrap());
        }
        assert_eq!(batch.queries_used, 5 * 7);
        assert_eq!(batch.sample_points, vec![x.to_vec()]);
    }

    #[test]
    fn sigma_n_scales_with_root_batch() {
        let spec = make_quadratic_linear(2).unwrap();
        let noise = NoiseModel::uniform(spec.functions.len(), 0.001, 0.0);
        let batch = first_order_batch(&spec, &noise, &[0.0, 0.0], 4, &mut rng_from_seed(3));
        for s in &batch.sigma_n {
            assert!((s - 0.0005).abs() < 1e-18);
        }
    }

    #[test]
    fn batches_are_deterministic() {
        let spec = make_quadratic_linear(2).unwrap();
        let noise = NoiseModel::uniform(spec.functions.len(), 0.01, 0.1);
        let x = [0.2, 0.1];
        let a = first_order_batch(&spec, &noise, &x, 3, &mut rng_from_seed(9));
        let b = first_order_batch(&spec, &noise, &x, 3, &mut rng_from_seed(9));
        assert_eq!(a, b);
        let a = zo_batch(&spec, &noise, &x, 0.01, 3, &mut rng_from_seed(9));
        let b = zo_batch(&spec, &noise, &x, 0.01, 3, &mut rng_from_seed(9));
        assert_eq!(a, b);
    }

    #[test]
    fn zo_query_accounting() {
        let spec = ProblemSpec {
            functions: vec![
                squared_norm(3).functions[0].clone(),
                Function::new(|x| x[0] - 1.0).with_gradient(|_| vec![1.0, 0.0, 0.0]),
            ],
            ..squared_norm(3)
        };
        let noise = NoiseModel::noiseless(2);
        let batch = zo_batch(&spec, &noise, &[0.0; 3], 0.1, 8, &mut rng_from_seed(0));
        assert_eq!(batch.queries_used, 32);
        assert_eq!(batch.sample_points.len(), 9);
        assert_eq!(batch.sample_points[0], vec![0.0; 3]);
        for p in &batch.sample_points[1..] {
            assert!((norm(p) - 0.1).abs() < 1e-12);
        }
        assert!((batch.b_hat[0] - 0.2).abs() < 1e-15);
        assert_eq!(batch.b_hat[1], 0.0);
    }

    #[test]
    fn sphere_directions_are_uniform() {
        let mut rng = rng_from_seed(11);
        let d = 4;
        let draws = 100_000;
        let mut mean = vec![0.0; d];
        for _ in 0..draws {
            let s = sample_sphere(d, &mut rng);
            assert!((norm(&s) - 1.0).abs() < 1e-12);
            for (m, v) in mean.iter_mut().zip(&s) {
                *m += v / draws as f64;
            }
        }
        let tol = 3.0 / (draws as f64).sqrt();
        assert!(mean.iter().all(|m| m.abs() < tol), "{mean:?}");
    }

    // Monte-Carlo mean with per-coordinate standard errors.
    fn zo_mean(spec: &ProblemSpec, x: &[f64], nu: f64, sigma: f64, draws: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let noise = NoiseModel::uniform(1, sigma, 0.0);
        let mut rng = rng_from_seed(seed);
        let d = spec.dim;
        let (mut sum, mut sum_sq) = (vec![0.0; d], vec![0.0; d]);
        for _ in 0..draws {
            let g = &zo_batch(spec, &noise, x, nu, 1, &mut rng).grad[0];
            for k in 0..d {
                sum[k] += g[k];
                sum_sq[k] += g[k] * g[k];
            }
        }
        let n = draws as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let se = (0..d)
            .map(|k| ((sum_sq[k] / n - mean[k] * mean[k]) / n).sqrt())
            .collect();
        (mean, se)
    }

    #[test]
    fn zo_linear_expectation_is_the_slope() {
        // E[d ⟨a,s⟩ s] = a since E[d s sᵀ] = I on the unit sphere.
        let a = vec![0.5, -1.0, 2.0];
        let spec = linear(a.clone());
        let (mean, se) = zo_mean(&spec, &[0.3, 0.1, -0.2], 0.05, 0.0, 100_000, 5);
        for k in 0..3 {
            assert!((mean[k] - a[k]).abs() <= 3.0 * se[k], "{k}: {} vs {}", mean[k], a[k]);
        }
    }

    #[test]
    fn zo_quadratic_is_unbiased() {
        let spec = squared_norm(3);
        let x = [0.4, -0.1, 0.25];
        let (mean, se) = zo_mean(&spec, &x, 0.2, 0.0, 100_000, 21);
        for k in 0..3 {
            assert!((mean[k] - 2.0 * x[k]).abs() <= 3.0 * se[k]);
        }
        // bias bound ν·M also holds
        let err = norm(&mean.iter().zip(&x).map(|(m, xi)| m - 2.0 * xi).collect::<Vec<_>>());
        let se_norm = norm(&se);
        assert!(err <= 0.2 * 2.0 + 3.0 * se_norm);
    }

    #[test]
    fn sampling_radius_drops_linear_terms() {
        let spec = ProblemSpec {
            diameter: 1.0,
            functions: vec![
                squared_norm(2).functions[0].clone().with_constants(1.0, 1.0),
                Function::new(|x| x[0] - 1.0).with_constants(0.0, 1.0),
            ],
            ..squared_norm(2)
        };
        let nu = safe_sampling_radius(&[0.1], &[1.0], &spec, 0.01);
        assert!((nu - 0.005).abs() < 1e-15);
        let doubled = safe_sampling_radius(&[0.1], &[1.0], &spec, 0.02);
        assert!((doubled - 2.0 * nu).abs() < 1e-15);
    }

    #[test]
    fn sampling_radius_on_box_start() {
        let d = 2;
        let spec = make_quadratic_linear(d).unwrap();
        let m = spec.num_constraints();
        let alpha = vec![1.0 / (d as f64).sqrt(); m];
        let lip = vec![1.0; m];
        let eta = 0.1;
        let nu = safe_sampling_radius(&alpha, &lip, &spec, eta);
        // linear constraints: only α/(2‖∇f‖) and η/(2 m M₀) survive
        let by_slack = alpha[0] / 2.0;
        let by_eta = eta / (2.0 * m as f64 * (1.0 / (2.0 * d as f64)));
        assert_eq!(nu, by_slack.min(by_eta));
    }

    #[test]
    fn sampling_radius_floor() {
        let spec = make_quadratic_linear(2).unwrap();
        let nu = safe_sampling_radius(&[1e-30; 4], &[1.0; 4], &spec, 0.1);
        assert_eq!(nu, NU_FLOOR);
    }

    #[test]
    fn feasible_radius_keeps_sphere_samples_inside() {
        let spec = make_gaussian_ellipsoid(3, 0.5).unwrap();
        let mut rng = rng_from_seed(5);
        let x = spec.x0.clone();
        let alpha = [-spec.value(1, &x)];
        let grad = [norm(&spec.gradient(1, &x).unwrap())];
        let nu = feasible_sampling_radius(&alpha, &grad, &spec);
        assert!(nu.is_finite() && nu > 0.0);
        assert!(safe_sampling_radius(&alpha, &grad, &spec, 0.1) <= nu);
        for _ in 0..2000 {
            let s = sample_sphere(3, &mut rng);
            let p: Vec<f64> = x.iter().zip(&s).map(|(a, b)| a + nu * b).collect();
            assert!(spec.value(1, &p) <= 0.0);
        }
        assert_eq!(feasible_sampling_radius(&[], &[], &spec), f64::INFINITY);
    }
}
