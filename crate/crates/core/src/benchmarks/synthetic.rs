use crate::error::{Error, Result};
use crate::problem::{Function, Mfcq, ProblemSpec};
use crate::vecops::dot;

/// Slater-based MFCQ constants for convex constraints: with `ρ = β/2`, the
/// direction away from `x0` has slope at least `(β − ρ)/R`.
fn slater_mfcq(beta: f64, diameter: f64) -> Mfcq {
    let rho = beta / 2.0;
    Mfcq {
        l: (beta - rho) / diameter,
        rho,
    }
}

/// `min ‖x − 2·1‖²/(4d)` over the box `|xₖ| ≤ 1/√d`, written as `2d` linear
/// constraints `⟨aᵢ, x⟩ − 1/√d ≤ 0` with `A = [I; −I]`.
pub fn make_quadratic_linear(d: usize) -> Result<ProblemSpec> {
    if d == 0 {
        return Err(Error::Dimension {
            d,
            reason: "dimension must be at least 1".into(),
        });
    }
    let df = d as f64;
    let b = 1.0 / df.sqrt();
    let scale = 1.0 / (4.0 * df);
    let objective = Function::new(move |x| x.iter().map(|v| (v - 2.0) * (v - 2.0)).sum::<f64>() * scale)
        .with_gradient(move |x| x.iter().map(|v| 2.0 * scale * (v - 2.0)).collect())
        // sup of ‖x − 2‖/(2d) over the box is at the far corner
        .with_constants(1.0 / (2.0 * df), (2.0 * df.sqrt() + 1.0) / (2.0 * df));
    let mut functions = vec![objective];
    for sign in [1.0, -1.0] {
        for k in 0..d {
            functions.push(
                Function::new(move |x| sign * x[k] - b)
                    .with_gradient(move |x| {
                        let mut g = vec![0.0; x.len()];
                        g[k] = sign;
                        g
                    })
                    .with_constants(0.0, 1.0),
            );
        }
    }
    let diameter = 2.0;
    Ok(ProblemSpec {
        name: format!("quadratic_linear(d={d})"),
        dim: d,
        functions,
        diameter,
        x0: vec![0.0; d],
        start_margin: b,
        value_bound: 2.0 * b,
        mfcq: Some(slater_mfcq(b, diameter)),
    })
}

/// Analytic optimum of [`make_quadratic_linear`]: clip `2·1` to the box.
pub fn quadratic_linear_optimum(d: usize) -> (Vec<f64>, f64) {
    let b = 1.0 / (d as f64).sqrt();
    let x: Vec<f64> = vec![2.0f64.min(b); d];
    let value = x.iter().map(|v| (v - 2.0) * (v - 2.0)).sum::<f64>() / (4.0 * d as f64);
    (x, value)
}

pub const ROSENBROCK_R1: f64 = 0.1;
pub const ROSENBROCK_R2: f64 = 0.2;
pub const ROSENBROCK_SHIFT: f64 = -0.05;
/// Multiplier applied to the objective's Hessian spectral norm.
pub const SMOOTHNESS_SAFETY: f64 = 1.5;

/// Constant Hessian of the objective of [`make_rosenbrock`].
pub fn rosenbrock_hessian(d: usize) -> Vec<Vec<f64>> {
    let mut h = vec![vec![0.0; d]; d];
    for i in 0..d.saturating_sub(1) {
        h[i][i] += 200.0 - 2.0;
        h[i + 1][i + 1] += 200.0;
        h[i][i + 1] -= 200.0;
        h[i + 1][i] -= 200.0;
    }
    h
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

/// Non-convex Rosenbrock-style objective `Σ 100(xᵢ − xᵢ₊₁)² − (1 − xᵢ)²`
/// (the minus sign is intentional) inside two balls `‖x‖ ≤ 0.1` and
/// `‖x − x̂‖ ≤ 0.2` with `x̂ = −0.05·1`.
pub fn make_rosenbrock(d: usize) -> Result<ProblemSpec> {
    if d < 2 {
        return Err(Error::Dimension {
            d,
            reason: "Rosenbrock needs at least two coordinates".into(),
        });
    }
    let (r1, r2) = (ROSENBROCK_R1, ROSENBROCK_R2);
    let df = d as f64;
    let beta = (r1 * r1).min(r2 * r2 - df * ROSENBROCK_SHIFT * ROSENBROCK_SHIFT);
    if beta <= 0.0 {
        return Err(Error::Dimension {
            d,
            reason: "origin is not strictly inside the shifted ball".into(),
        });
    }
    let spectral = symmetric_eigenvalues(rosenbrock_hessian(d))
        .into_iter()
        .map(f64::abs)
        .fold(0.0, f64::max);
    let m0 = SMOOTHNESS_SAFETY * spectral;
    // ∇f⁰ is affine: ‖∇f⁰(x)‖ ≤ ‖∇f⁰(0)‖ + ‖H‖·r₁ on the feasible set
    let l0 = 2.0 * (df - 1.0).sqrt() + spectral * r1;
    let objective = Function::new(|x| {
        x.windows(2)
            .map(|w| 100.0 * (w[0] - w[1]).powi(2) - (1.0 - w[0]).powi(2))
            .sum()
    })
    .with_gradient(|x| {
        let mut g = vec![0.0; x.len()];
        for i in 0..x.len() - 1 {
            let diff = x[i] - x[i + 1];
            g[i] += 200.0 * diff + 2.0 * (1.0 - x[i]);
            g[i + 1] -= 200.0 * diff;
        }
        g
    })
    .with_constants(m0, l0);
    let inner = Function::new(move |x| dot(x, x) - r1 * r1)
        .with_gradient(|x| x.iter().map(|v| 2.0 * v).collect())
        .with_constants(2.0, 2.0 * r1);
    let outer = Function::new(move |x| {
        x.iter().map(|v| (v - ROSENBROCK_SHIFT).powi(2)).sum::<f64>() - r2 * r2
    })
    .with_gradient(|x| x.iter().map(|v| 2.0 * (v - ROSENBROCK_SHIFT)).collect())
    .with_constants(2.0, 2.0 * (r1 + ROSENBROCK_SHIFT.abs() * df.sqrt()));
    let diameter = 2.0 * r1;
    Ok(ProblemSpec {
        name: format!("rosenbrock(d={d})"),
        dim: d,
        functions: vec![objective, inner, outer],
        diameter,
        x0: vec![0.0; d],
        start_margin: beta,
        value_bound: r2 * r2,
        mfcq: Some(slater_mfcq(beta, diameter)),
    })
}

pub const ELLIPSOID_FIRST_AXIS: f64 = 3.0;
pub const ELLIPSOID_OTHER_AXES: f64 = 1.2;

fn ellipsoid_weights(d: usize) -> Vec<f64> {
    let mut a = vec![ELLIPSOID_OTHER_AXES; d];
    a[0] = ELLIPSOID_FIRST_AXIS;
    a
}

/// Ellipsoid center `0.5·1/√d`.
pub fn ellipsoid_center(d: usize) -> Vec<f64> {
    vec![0.5 / (d as f64).sqrt(); d]
}

/// `min −exp(−4‖x‖²)` subject to `⟨x − x̂, A(x − x̂)⟩ ≤ r²` with
/// `A = diag(3, 1.2, …, 1.2)`. Starts at the ellipsoid center.
pub fn make_gaussian_ellipsoid(d: usize, r: f64) -> Result<ProblemSpec> {
    if d < 2 {
        return Err(Error::Dimension {
            d,
            reason: "ellipsoid benchmark needs d >= 2".into(),
        });
    }
    if !(r > 0.0) {
        return Err(Error::Precondition(format!("radius must be positive, got {r}")));
    }
    let center = ellipsoid_center(d);
    let weights = ellipsoid_weights(d);
    let objective = Function::new(|x| -(-4.0 * dot(x, x)).exp())
        .with_gradient(|x| {
            let e = (-4.0 * dot(x, x)).exp();
            x.iter().map(|v| 8.0 * v * e).collect()
        })
        // ‖∇²‖ ≤ 8 (attained at the origin); sup ‖∇f⁰‖ = 8·r·e^{−4r²} at r = 1/(2√2)
        .with_constants(8.0, 2.0 * 2f64.sqrt() * (-0.5f64).exp());
    let (c1, w1) = (center.clone(), weights.clone());
    let (c2, w2) = (center.clone(), weights.clone());
    let constraint = Function::new(move |x| {
        x.iter()
            .zip(&c1)
            .zip(&w1)
            .map(|((xi, ci), wi)| wi * (xi - ci) * (xi - ci))
            .sum::<f64>()
            - r * r
    })
    .with_gradient(move |x| {
        x.iter()
            .zip(&c2)
            .zip(&w2)
            .map(|((xi, ci), wi)| 2.0 * wi * (xi - ci))
            .collect()
    })
    // ‖2A y‖ ≤ 2√λ_max·√(yᵀAy) ≤ 2√3·r on the feasible set
    .with_constants(2.0 * ELLIPSOID_FIRST_AXIS, 2.0 * ELLIPSOID_FIRST_AXIS.sqrt() * r);
    let diameter = 2.0 * r / ELLIPSOID_OTHER_AXES.sqrt();
    let beta = r * r;
    Ok(ProblemSpec {
        name: format!("gaussian_ellipsoid(d={d}, r={r})"),
        dim: d,
        functions: vec![objective, constraint],
        diameter,
        x0: center,
        start_margin: beta,
        value_bound: beta,
        mfcq: Some(slater_mfcq(beta, diameter)),
    })
}

/// Optimal value of [`make_gaussian_ellipsoid`]: `−exp(−4‖x*‖²)` with `x*`
/// the feasible point closest to the origin.
pub fn gaussian_ellipsoid_optimum(d: usize, r: f64) -> (Vec<f64>, f64) {
    let center = ellipsoid_center(d);
    let weights = ellipsoid_weights(d);
    let quad: f64 = center.iter().zip(&weights).map(|(c, w)| w * c * c).sum();
    if quad <= r * r {
        return (vec![0.0; d], -1.0);
    }
    // x(μ) = μA x̂ /(1 + μA) componentwise; the constraint value decreases in μ
    let point = |mu: f64| -> Vec<f64> {
        center
            .iter()
            .zip(&weights)
            .map(|(c, w)| mu * w * c / (1.0 + mu * w))
            .collect()
    };
    let residual = |mu: f64| -> f64 {
        center
            .iter()
            .zip(&weights)
            .map(|(c, w)| w * (c / (1.0 + mu * w)).powi(2))
            .sum::<f64>()
            - r * r
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while residual(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = point(hi);
    let value = -(-4.0 * dot(&x, &x)).exp();
    (x, value)
}

/// Spectral-norm bound check used by tests: largest `|λ|` of the ellipsoid
/// objective Hessian `e^{−4‖x‖²}(8I − 64xxᵀ)` at `x`.
pub fn gaussian_hessian_norm(x: &[f64]) -> f64 {
    let r2 = dot(x, x);
    let e = (-4.0 * r2).exp();
    // eigenvalues: 8e (multiplicity d−1) and e(8 − 64r²) along x
    (8.0 * e).max((e * (8.0 - 64.0 * r2)).abs())
}
