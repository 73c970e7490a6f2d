//! LB-SGD iteration at fixed η and the decreasing-η restart scheme.
//!
//! Every point handed to the oracle is re-evaluated against the true
//! constraints (the audit channel) so safety can be checked independently of
//! the solver's own estimates.

use std::time::Instant;

use serde::Serialize;

use crate::barrier::{confidence_factor, truncate, BarrierState};
use crate::error::{Error, Result};
use crate::oracle::{feasible_sampling_radius, safe_sampling_radius, BatchEstimate, BatchOracle, Rng, NU_FLOOR};
use crate::problem::{kkt_certificate, KktCertificate, Mode, ProblemSpec, SolverConfig};
use crate::vecops::{axpy, norm};

/// Consecutive near-zero steps after which a round is declared stalled.
pub const STALL_STEPS: usize = 10;
pub const STALL_GAMMA: f64 = 1e-14;

/// `δ = δ̂ / (max(m,1)·T_total)`.
pub fn per_step_confidence(delta_hat: f64, m: usize, t_total: usize) -> f64 {
    delta_hat / (m.max(1) as f64 * t_total as f64)
}

/// Number of restart rounds `K = ⌈log(η₀/η_final)/log(1/ω)⌉`.
pub fn restart_rounds(eta0: f64, eta_final: f64, omega: f64) -> usize {
    if eta_final >= eta0 {
        return 0;
    }
    let ratio = (eta0 / eta_final).ln() / (1.0 / omega).ln();
    // 0.7³ is not exactly 0.343 in binary; absorb that kind of rounding
    (ratio - 1e-9).ceil().max(1.0) as usize
}

/// `η_k = ω^k·η₀` for `k = 1..K`.
pub fn eta_sequence(eta0: f64, eta_final: f64, omega: f64) -> Vec<f64> {
    (1..=restart_rounds(eta0, eta_final, omega))
        .map(|k| eta0 * omega.powi(k as i32))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterateRecord {
    pub t: usize,
    pub queries_cum: u64,
    pub x: Vec<f64>,
    pub f0_true: f64,
    pub max_constraint_true: f64,
    /// Barrier value at the measured (truncated) values.
    pub barrier_est: f64,
    pub g_norm: f64,
    pub gamma: f64,
    pub eta: f64,
    pub violated: bool,
    /// Infeasible query points among `sample_points`.
    pub violation_count: u64,
    pub deviation_bound: f64,
    pub near_boundary: bool,
    /// Sampling radius used (zero when the oracle does not sample around `x`).
    pub nu: f64,
    /// Every point queried this iteration; the iterate comes first.
    #[serde(skip)]
    pub sample_points: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputRule {
    ArgminGnorm,
    WeightedAverage,
    LastRound,
}

/// `(η_k, T_k, n_k)` of one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundInfo {
    pub eta: f64,
    pub steps: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub trajectory: Vec<IterateRecord>,
    pub output_x: Vec<f64>,
    pub output_rule: OutputRule,
    /// Last point reached, used to warm-start the next round.
    pub last_x: Vec<f64>,
    pub violations_total: u64,
    pub queries_total: u64,
    pub iterations_total: usize,
    pub wall_time_seconds: f64,
    pub kkt: Option<KktCertificate>,
    /// Deviation bound reported at the record selected by the output rule.
    pub output_deviation_bound: f64,
    pub eta_schedule: Vec<RoundInfo>,
    pub delta_step: f64,
    pub stopped_early: bool,
    pub stalled: bool,
    pub budget_exhausted: bool,
}

impl RunReport {
    fn empty(x0: &[f64], rule: OutputRule, delta_step: f64) -> Self {
        RunReport {
            trajectory: Vec::new(),
            output_x: x0.to_vec(),
            output_rule: rule,
            last_x: x0.to_vec(),
            violations_total: 0,
            queries_total: 0,
            iterations_total: 0,
            wall_time_seconds: 0.0,
            kkt: None,
            output_deviation_bound: 0.0,
            eta_schedule: Vec::new(),
            delta_step,
            stopped_early: false,
            stalled: false,
            budget_exhausted: false,
        }
    }
}

/// Round-independent settings for [`run_round`].
struct RoundContext<'a> {
    spec: &'a ProblemSpec,
    oracle: &'a dyn BatchOracle,
    config: &'a SolverConfig,
    delta_step: f64,
    /// Convex output and no early stop (convex and strongly convex modes).
    convex: bool,
}

/// Mutable counters carried across rounds.
struct Progress {
    t: usize,
    queries: u64,
}

/// Estimated slack lower bounds and gradient norms at the next iterate, used
/// to pick `ν` before it is queried.
struct RadiusState {
    alpha: Vec<f64>,
    grad_norm: Vec<f64>,
}

impl RadiusState {
    fn at_start(spec: &ProblemSpec) -> Self {
        let m = spec.num_constraints();
        RadiusState {
            alpha: vec![spec.start_margin; m],
            grad_norm: (1..=m).map(|i| spec.lipschitz(i)).collect(),
        }
    }

    /// Warm start at a γ-weighted average: for convex constraints the slack
    /// there is at least the smallest slack seen, and `Lᵢ` bounds gradients.
    fn at_average(spec: &ProblemSpec, min_alpha: &[f64]) -> Self {
        RadiusState {
            alpha: min_alpha.iter().map(|a| 0.5 * a).collect(),
            grad_norm: (1..=min_alpha.len()).map(|i| spec.lipschitz(i)).collect(),
        }
    }

    /// After a step of length `s` the half-growth rule keeps slacks above
    /// `α̲/2`, and the descent lemma along the step gives `α̲ − sθ̂ − Ms²/2`;
    /// the larger bound is kept. Gradients move by at most `Mᵢ·s` and never
    /// exceed `Lᵢ`.
    fn advance(&mut self, spec: &ProblemSpec, batch: &BatchEstimate, state: &BarrierState, step_len: f64) {
        let root_log = confidence_factor(state.delta_step);
        for i in 0..self.alpha.len() {
            let mi = spec.smoothness(i + 1);
            let a = state.alpha_lower[i];
            let along = a - step_len * state.theta_hat[i] - 0.5 * mi * step_len * step_len;
            self.alpha[i] = (0.5 * a).max(along);
            let here = norm(&batch.grad[i + 1]) + batch.b_hat[i + 1] + batch.sigma_hat_n[i + 1] * root_log;
            self.grad_norm[i] = (here + mi * step_len).min(spec.lipschitz(i + 1));
        }
    }
}

fn check_inputs(spec: &ProblemSpec, config: &SolverConfig, oracle: &dyn BatchOracle) -> Result<()> {
    config.validate()?;
    let problems = spec.validate();
    if !problems.is_empty() {
        return Err(Error::InvalidProblem(problems));
    }
    if oracle.num_functions() != spec.functions.len() {
        return Err(Error::Precondition(format!(
            "oracle serves {} functions but the problem has {}",
            oracle.num_functions(),
            spec.functions.len()
        )));
    }
    Ok(())
}

fn audit_points(spec: &ProblemSpec, points: &[Vec<f64>]) -> u64 {
    points.iter().filter(|p| spec.max_constraint(p) > 0.0).count() as u64
}

/// One fixed-η LB-SGD round from `x0`. Appends to `report` and returns the
/// round's mode-specific output and warm-start points.
fn run_round(
    ctx: &RoundContext,
    x0: &[f64],
    round: RoundInfo,
    progress: &mut Progress,
    radius: &mut RadiusState,
    report: &mut RunReport,
    rng: &mut Rng,
) -> (Vec<f64>, Vec<f64>, f64) {
    let spec = ctx.spec;
    let eta = round.eta;
    let first = report.trajectory.len();
    let mut x = x0.to_vec();
    let mut min_alpha = radius.alpha.clone();
    let mut slow_steps = 0;
    for _ in 0..round.steps {
        let cost = ctx.oracle.batch_cost(round.batch_size);
        if progress.queries.saturating_add(cost) > ctx.config.max_total_queries {
            report.budget_exhausted = true;
            break;
        }
        let nu = if ctx.oracle.uses_sampling_radius() {
            match ctx.config.nu_override {
                // the override trades bias for variance but never feasibility
                Some(cap) => cap.min(feasible_sampling_radius(&radius.alpha, &radius.grad_norm, spec)).max(NU_FLOOR),
                None => safe_sampling_radius(&radius.alpha, &radius.grad_norm, spec, eta),
            }
        } else {
            0.0
        };
        let batch = ctx.oracle.query(&x, round.batch_size, nu, rng);
        progress.queries += batch.queries_used;
        progress.t += 1;
        let state = BarrierState::compute(&batch, spec, eta, ctx.config.trunc_a, ctx.delta_step);
        for (lo, a) in min_alpha.iter_mut().zip(&state.alpha_lower) {
            *lo = lo.min(*a);
        }
        let stop = !ctx.convex && state.g_norm <= 0.75 * eta;
        let gamma = if stop { 0.0 } else { state.gamma };

        let violation_count = audit_points(spec, &batch.sample_points);
        let barrier_est = batch.value[0]
            - eta * batch.value[1..].iter().map(|v| truncate(-v, ctx.config.trunc_a).ln()).sum::<f64>();
        report.violations_total += violation_count;
        report.trajectory.push(IterateRecord {
            t: progress.t,
            queries_cum: progress.queries,
            x: x.clone(),
            f0_true: spec.value(0, &x),
            max_constraint_true: spec.max_constraint(&x),
            barrier_est,
            g_norm: state.g_norm,
            gamma,
            eta,
            violated: violation_count > 0,
            violation_count,
            deviation_bound: state.deviation_bound,
            near_boundary: state.near_boundary,
            nu,
            sample_points: batch.sample_points.clone(),
        });
        if stop {
            report.stopped_early = true;
            break;
        }
        axpy(-gamma, &state.g, &mut x);
        radius.advance(spec, &batch, &state, gamma * state.g_norm);
        if gamma < STALL_GAMMA {
            slow_steps += 1;
            if slow_steps >= STALL_STEPS {
                report.stalled = true;
                break;
            }
        } else {
            slow_steps = 0;
        }
    }
    let records = &report.trajectory[first..];
    if records.is_empty() {
        return (x0.to_vec(), x0.to_vec(), 0.0);
    }
    if ctx.convex {
        *radius = RadiusState::at_average(spec, &min_alpha);
        let weight: f64 = records.iter().map(|r| r.gamma).sum();
        let avg = if weight > 0.0 {
            let mut avg = vec![0.0; spec.dim];
            for r in records {
                axpy(r.gamma / weight, &r.x, &mut avg);
            }
            avg
        } else {
            records[0].x.clone()
        };
        let dev = records.iter().map(|r| r.deviation_bound).fold(0.0, f64::max);
        (avg.clone(), avg, dev)
    } else {
        let best = records
            .iter()
            .min_by(|a, b| a.g_norm.total_cmp(&b.g_norm))
            .expect("non-empty round");
        (best.x.clone(), x, best.deviation_bound)
    }
}

fn finish(report: &mut RunReport, spec: &ProblemSpec, eta: f64, started: Instant) {
    report.iterations_total = report.trajectory.len();
    report.wall_time_seconds = started.elapsed().as_secs_f64();
    report.kkt = if spec.has_gradients() && spec.num_constraints() > 0 {
        kkt_certificate(spec, &report.output_x, eta).ok()
    } else {
        None
    };
}

/// LB-SGD at the fixed `config.eta0` for `config.steps_per_round` iterations.
///
/// Non-convex mode stops once `‖g‖ ≤ 3η/4` and returns the iterate with the
/// smallest `‖g‖`; convex modes run every step and return the γ-weighted
/// average of the iterates.
pub fn lbsgd_run(
    spec: &ProblemSpec,
    config: &SolverConfig,
    oracle: &dyn BatchOracle,
    rng: &mut Rng,
) -> Result<RunReport> {
    check_inputs(spec, config, oracle)?;
    let started = Instant::now();
    let convex = config.mode != Mode::Nonconvex;
    let delta_step = per_step_confidence(config.delta_hat, spec.num_constraints(), config.steps_per_round);
    let rule = if convex { OutputRule::WeightedAverage } else { OutputRule::ArgminGnorm };
    let mut report = RunReport::empty(&spec.x0, rule, delta_step);
    let ctx = RoundContext { spec, oracle, config, delta_step, convex };
    let round = RoundInfo {
        eta: config.eta0,
        steps: config.steps_per_round,
        batch_size: config.batch_size,
    };
    let mut progress = Progress { t: 0, queries: 0 };
    let mut radius = RadiusState::at_start(spec);
    let (output, last, dev) = run_round(&ctx, &spec.x0, round, &mut progress, &mut radius, &mut report, rng);
    report.eta_schedule.push(round);
    report.output_x = output;
    report.last_x = last;
    report.output_deviation_bound = dev;
    report.queries_total = progress.queries;
    finish(&mut report, spec, config.eta0, started);
    Ok(report)
}

/// Restarts with `η_k = ω^k·η₀`, taking `(T_k, n_k)` from the config.
pub fn restart_run(
    spec: &ProblemSpec,
    config: &SolverConfig,
    oracle: &dyn BatchOracle,
    rng: &mut Rng,
) -> Result<RunReport> {
    let constant = |_: usize| (config.steps_per_round, config.batch_size);
    restart_run_with(spec, config, oracle, rng, &constant)
}

/// [`restart_run`] with a per-round `(T_k, n_k)` hook; `k` counts from 1.
pub fn restart_run_with(
    spec: &ProblemSpec,
    config: &SolverConfig,
    oracle: &dyn BatchOracle,
    rng: &mut Rng,
    schedule: &dyn Fn(usize) -> (usize, usize),
) -> Result<RunReport> {
    check_inputs(spec, config, oracle)?;
    let started = Instant::now();
    let etas = eta_sequence(config.eta0, config.eta_final, config.omega);
    let rounds: Vec<RoundInfo> = etas
        .iter()
        .enumerate()
        .map(|(k, &eta)| {
            let (steps, batch_size) = schedule(k + 1);
            RoundInfo { eta, steps, batch_size }
        })
        .collect();
    if rounds.iter().any(|r| r.steps == 0 || r.batch_size == 0) {
        return Err(Error::Config("schedule hook returned a zero step count or batch size".into()));
    }
    let t_total: usize = rounds.iter().map(|r| r.steps).sum();
    let delta_step = per_step_confidence(config.delta_hat, spec.num_constraints(), t_total.max(1));
    let mut report = RunReport::empty(&spec.x0, OutputRule::LastRound, delta_step);
    let ctx = RoundContext {
        spec,
        oracle,
        config,
        delta_step,
        convex: config.mode != Mode::Nonconvex,
    };
    let mut progress = Progress { t: 0, queries: 0 };
    let mut start = spec.x0.clone();
    let mut radius = RadiusState::at_start(spec);
    for round in rounds {
        let (output, last, dev) = run_round(&ctx, &start, round, &mut progress, &mut radius, &mut report, rng);
        report.eta_schedule.push(round);
        report.output_x = output;
        report.output_deviation_bound = dev;
        start = if ctx.convex { report.output_x.clone() } else { last };
        report.last_x = start.clone();
        if report.budget_exhausted {
            break;
        }
    }
    report.queries_total = progress.queries;
    let final_eta = report.eta_schedule.last().map_or(config.eta0, |r| r.eta);
    finish(&mut report, spec, final_eta, started);
    Ok(report)
}

/// Single fixed-η run when `eta_final == eta0`, restarts otherwise.
pub fn solve(
    spec: &ProblemSpec,
    config: &SolverConfig,
    oracle: &dyn BatchOracle,
    rng: &mut Rng,
) -> Result<RunReport> {
    if config.eta_final < config.eta0 {
        restart_run(spec, config, oracle, rng)
    } else {
        lbsgd_run(spec, config, oracle, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{make_gaussian_ellipsoid, make_quadratic_linear};
    use crate::oracle::{rng_from_seed, FirstOrderOracle, NoiseModel, ZerothOrderOracle};
    use crate::problem::{Function, OracleKind};

    fn sphere_objective(d: usize) -> ProblemSpec {
        ProblemSpec {
            name: "sphere".into(),
            dim: d,
            functions: vec![Function::new(|x| x.iter().map(|v| v * v).sum())
                .with_gradient(|x| x.iter().map(|v| 2.0 * v).collect())
                .with_constants(2.0, 20.0)],
            diameter: 10.0,
            x0: vec![1.0; d],
            start_margin: 1.0,
            value_bound: 1.0,
            mfcq: None,
        }
    }

    #[test]
    fn confidence_examples() {
        assert!((per_step_confidence(0.05, 1, 100) - 5e-4).abs() < 1e-18);
        assert_eq!(per_step_confidence(0.05, 0, 100), 0.05 / 100.0);
        assert!((per_step_confidence(0.1, 2, 250) - 2e-4).abs() < 1e-18);
    }

    #[test]
    fn restart_schedule() {
        let etas = eta_sequence(1.0, 0.343, 0.7);
        assert_eq!(etas.len(), 3);
        for (got, want) in etas.iter().zip([0.7, 0.49, 0.343]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert_eq!(restart_rounds(0.3, 0.3, 0.5), 0);
        assert_eq!(restart_rounds(1.0, 0.3, 0.5), 2);
    }

    #[test]
    fn unconstrained_descent_uses_inverse_smoothness() {
        let spec = sphere_objective(3);
        let oracle = FirstOrderOracle { spec: spec.clone(), noise: NoiseModel::noiseless(1) };
        let config = SolverConfig::fixed(1e-3, 5, 1, Mode::Convex, OracleKind::FirstOrder);
        let report = lbsgd_run(&spec, &config, &oracle, &mut rng_from_seed(0)).unwrap();
        assert_eq!(report.trajectory.len(), 5);
        // γ = 1/M₀ = 1/2 on ‖x‖² lands on the minimizer in one step
        assert_eq!(report.trajectory[0].gamma, 0.5);
        assert_eq!(report.trajectory[1].g_norm, 0.0);
        assert_eq!(report.trajectory[1].gamma, 0.0);
    }

    #[test]
    fn gradient_norm_decreases_without_constraints() {
        let mut spec = sphere_objective(2);
        spec.functions[0] = spec.functions[0].clone().with_constants(4.0, 20.0);
        let oracle = FirstOrderOracle { spec: spec.clone(), noise: NoiseModel::noiseless(1) };
        let config = SolverConfig::fixed(1e-6, 20, 1, Mode::Nonconvex, OracleKind::FirstOrder);
        let report = lbsgd_run(&spec, &config, &oracle, &mut rng_from_seed(0)).unwrap();
        for pair in report.trajectory.windows(2) {
            assert!(pair[1].g_norm < pair[0].g_norm);
        }
    }

    #[test]
    fn immediate_stop_when_gradient_is_small() {
        let mut spec = sphere_objective(2);
        spec.x0 = vec![0.0, 0.0];
        let oracle = FirstOrderOracle { spec: spec.clone(), noise: NoiseModel::noiseless(1) };
        let config = SolverConfig::fixed(0.1, 50, 1, Mode::Nonconvex, OracleKind::FirstOrder);
        let report = lbsgd_run(&spec, &config, &oracle, &mut rng_from_seed(0)).unwrap();
        assert_eq!(report.trajectory.len(), 1);
        assert!(report.stopped_early);
        assert_eq!(report.output_rule, OutputRule::ArgminGnorm);
    }

    #[test]
    fn noiseless_quadratic_run_halves_constraints() {
        let spec = make_quadratic_linear(2).unwrap();
        let oracle = FirstOrderOracle { spec: spec.clone(), noise: NoiseModel::noiseless(5) };
        let config = SolverConfig::fixed(0.05, 200, 1, Mode::Nonconvex, OracleKind::FirstOrder);
        let report = lbsgd_run(&spec, &config, &oracle, &mut rng_from_seed(0)).unwrap();
        assert_eq!(report.violations_total, 0);
        for pair in report.trajectory.windows(2) {
            for i in 1..spec.functions.len() {
                assert!(spec.value(i, &pair[1].x) <= spec.value(i, &pair[0].x) / 2.0);
            }
        }
    }

    #[test]
    fn query_accounting_is_exact() {
        let spec = make_gaussian_ellipsoid(3, 0.5).unwrap();
        let oracle = ZerothOrderOracle { spec: spec.clone(), noise: NoiseModel::uniform(2, 1e-3, 0.0) };
        let config = SolverConfig::fixed(0.05, 30, 2, Mode::Nonconvex, OracleKind::ZerothOrder);
        let report = lbsgd_run(&spec, &config, &oracle, &mut rng_from_seed(3)).unwrap();
        let mut prev = 0;
        for r in &report.trajectory {
            assert_eq!(r.queries_cum - prev, 8);
            prev = r.queries_cum;
        }
        assert_eq!(report.queries_total, prev);
    }

    #[test]
    fn budget_stops_the_run() {
        let spec = make_quadratic_linear(2).unwrap();
        let oracle = ZerothOrderOracle { spec: spec.clone(), noise: NoiseModel::noiseless(5) };
        let mut config = SolverConfig::fixed(0.05, 1000, 1, Mode::Convex, OracleKind::ZerothOrder);
        config.max_total_queries = 95;
        let report = lbsgd_run(&spec, &config, &oracle, &mut rng_from_seed(0)).unwrap();
        assert!(report.budget_exhausted);
        assert_eq!(report.queries_total, 90);
    }

    #[test]
    fn reruns_are_bitwise_identical() {
        let spec = make_gaussian_ellipsoid(4, 0.5).unwrap();
        let oracle = ZerothOrderOracle { spec: spec.clone(), noise: NoiseModel::uniform(2, 1e-3, 0.0) };
        let mut config = SolverConfig::fixed(0.1, 10, 2, Mode::Nonconvex, OracleKind::ZerothOrder);
        config.eta_final = 0.02;
        let a = restart_run(&spec, &config, &oracle, &mut rng_from_seed(9)).unwrap();
        let b = restart_run(&spec, &config, &oracle, &mut rng_from_seed(9)).unwrap();
        assert_eq!(a.trajectory, b.trajectory);
        assert_eq!(a.output_x, b.output_x);
    }

    #[test]
    fn zero_rounds_return_start() {
        let spec = make_quadratic_linear(2).unwrap();
        let oracle = FirstOrderOracle { spec: spec.clone(), noise: NoiseModel::noiseless(5) };
        let config = SolverConfig::fixed(0.05, 10, 1, Mode::Convex, OracleKind::FirstOrder);
        let report = restart_run(&spec, &config, &oracle, &mut rng_from_seed(0)).unwrap();
        assert!(report.trajectory.is_empty());
        assert_eq!(report.output_x, spec.x0);
    }

    #[test]
    fn weighted_average_is_feasible_on_convex_problem() {
        let spec = make_quadratic_linear(3).unwrap();
        let oracle = ZerothOrderOracle { spec: spec.clone(), noise: NoiseModel::uniform(7, 1e-3, 0.0) };
        let config = SolverConfig::fixed(0.05, 60, 1, Mode::Convex, OracleKind::ZerothOrder);
        let report = lbsgd_run(&spec, &config, &oracle, &mut rng_from_seed(1)).unwrap();
        assert_eq!(report.output_rule, OutputRule::WeightedAverage);
        assert!(spec.max_constraint(&report.output_x) <= 0.0);
    }
}
