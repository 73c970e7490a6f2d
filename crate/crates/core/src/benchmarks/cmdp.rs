//! Toy constrained MDP solved by policy search over softmax parameters.
//!
//! `f⁰(x) = −E[Σ γ^τ R]` and `f¹(x) = E[Σ γ^τ c] − d¹` under the softmax
//! policy with logits `x[s·|A| + a]`. Exact values come from finite-horizon
//! dynamic programming; the oracle uses Monte-Carlo rollouts with the
//! reward-to-go score-function gradient.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{uniform01, BatchEstimate, BatchOracle, Rng};
use crate::problem::{Function, ProblemSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularCmdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// `transition[s][a][s']`
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<f64>>,
    pub cost: Vec<Vec<f64>>,
    pub discount: f64,
    pub horizon: usize,
    /// Constraint level `d¹`.
    pub threshold: f64,
    pub init_dist: Vec<f64>,
}

impl TabularCmdp {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Precondition(m));
        if self.n_states == 0 || self.n_actions == 0 || self.horizon == 0 {
            return bad("CMDP sizes must be positive".into());
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad(format!("discount must lie in (0,1], got {}", self.discount));
        }
        if self.init_dist.len() != self.n_states
            || (self.init_dist.iter().sum::<f64>() - 1.0).abs() > 1e-12
        {
            return bad("initial distribution must sum to one".into());
        }
        for (s, row) in self.transition.iter().enumerate() {
            for (a, probs) in row.iter().enumerate() {
                if probs.len() != self.n_states || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return bad(format!("transition row ({s},{a}) does not sum to one"));
                }
            }
        }
        if self.cost.iter().flatten().any(|c| *c < 0.0) {
            return bad("costs must be non-negative".into());
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n_states * self.n_actions
    }

    /// Softmax action probabilities per state.
    pub fn policy(&self, x: &[f64]) -> Vec<Vec<f64>> {
        x.chunks(self.n_actions)
            .map(|logits| {
                let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
                let total: f64 = exps.iter().sum();
                exps.into_iter().map(|e| e / total).collect()
            })
            .collect()
    }

    /// Expected discounted sum of `signal` over the horizon (exact DP).
    pub fn evaluate(&self, x: &[f64], signal: &[Vec<f64>]) -> f64 {
        let pi = self.policy(x);
        let mut value = vec![0.0; self.n_states];
        for _ in 0..self.horizon {
            let next: Vec<f64> = (0..self.n_states)
                .map(|s| {
                    (0..self.n_actions)
                        .map(|a| {
                            let future: f64 = self.transition[s][a]
                                .iter()
                                .zip(&value)
                                .map(|(p, v)| p * v)
                                .sum();
                            pi[s][a] * (signal[s][a] + self.discount * future)
                        })
                        .sum()
                })
                .collect();
            value = next;
        }
        self.init_dist.iter().zip(&value).map(|(p, v)| p * v).sum()
    }

    pub fn expected_return(&self, x: &[f64]) -> f64 {
        self.evaluate(x, &self.reward)
    }

    pub fn expected_cost(&self, x: &[f64]) -> f64 {
        self.evaluate(x, &self.cost)
    }

    fn sample_index(probs: &[f64], rng: &mut Rng) -> usize {
        let u = uniform01(rng);
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    /// Chain length including the absorbing goal state.
    pub n_states: usize,
    /// States where the shortcut exists and costs 1.
    pub hazard_states: Vec<usize>,
    pub advance_prob: f64,
    pub shortcut_prob: f64,
    pub shortcut_reward: f64,
    pub discount: f64,
    pub horizon: usize,
    pub threshold: f64,
    pub episodes_per_estimate: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            n_states: 6,
            hazard_states: vec![2, 3],
            advance_prob: 0.9,
            shortcut_prob: 0.7,
            shortcut_reward: 0.1,
            discount: 0.95,
            horizon: 20,
            threshold: 1.0,
            episodes_per_estimate: 1000,
        }
    }
}

/// Smoothness / Lipschitz constants for the default chain: 1.5× (rounded up)
/// the largest Hessian spectral norm and gradient norm found by sampling
/// logits with scales up to 10.
pub const CHAIN_SMOOTHNESS: [f64; 2] = [4.0, 0.75];
pub const CHAIN_LIPSCHITZ: [f64; 2] = [6.0, 0.8];

#[derive(Debug, Clone)]
pub struct SoftmaxPolicyProblem {
    pub cmdp: Arc<TabularCmdp>,
    pub dim: usize,
    pub episodes_per_estimate: usize,
    pub smoothness: [f64; 2],
    pub lipschitz: [f64; 2],
}

/// Chain MDP: action 0 advances (w.p. `advance_prob`), action 1 takes a
/// costly shortcut to the goal in hazard states and steps back elsewhere.
/// The goal pays reward 1 per step.
pub fn make_chain_cmdp(config: &ChainConfig) -> Result<SoftmaxPolicyProblem> {
    let n = config.n_states;
    if n < 2 || config.horizon == 0 || config.episodes_per_estimate == 0 {
        return Err(Error::Precondition("chain sizes must be positive (n_states >= 2)".into()));
    }
    let goal = n - 1;
    let mut transition = vec![vec![vec![0.0; n]; 2]; n];
    let mut reward = vec![vec![0.0; 2]; n];
    let mut cost = vec![vec![0.0; 2]; n];
    for s in 0..goal {
        transition[s][0][s + 1] += config.advance_prob;
        transition[s][0][s] += 1.0 - config.advance_prob;
        if config.hazard_states.contains(&s) {
            transition[s][1][goal] += config.shortcut_prob;
            transition[s][1][s] += 1.0 - config.shortcut_prob;
            reward[s][1] = config.shortcut_reward;
            cost[s][1] = 1.0;
        } else {
            transition[s][1][s.saturating_sub(1)] += 1.0;
        }
    }
    transition[goal][0][goal] = 1.0;
    transition[goal][1][goal] = 1.0;
    reward[goal] = vec![1.0, 1.0];
    let mut init_dist = vec![0.0; n];
    init_dist[0] = 1.0;
    let cmdp = TabularCmdp {
        n_states: n,
        n_actions: 2,
        transition,
        reward,
        cost,
        discount: config.discount,
        horizon: config.horizon,
        threshold: config.threshold,
        init_dist,
    };
    cmdp.validate()?;
    let uniform_cost = cmdp.expected_cost(&vec![0.0; cmdp.dim()]);
    if !(uniform_cost < cmdp.threshold) {
        return Err(Error::Precondition(format!(
            "uniform policy is unsafe: expected cost {uniform_cost} >= threshold {}",
            cmdp.threshold
        )));
    }
    Ok(SoftmaxPolicyProblem {
        dim: cmdp.dim(),
        cmdp: Arc::new(cmdp),
        episodes_per_estimate: config.episodes_per_estimate,
        smoothness: CHAIN_SMOOTHNESS,
        lipschitz: CHAIN_LIPSCHITZ,
    })
}

impl SoftmaxPolicyProblem {
    /// Exact-DP view as a [`ProblemSpec`] starting at the uniform policy.
    pub fn spec(&self) -> ProblemSpec {
        let (c0, c1) = (self.cmdp.clone(), self.cmdp.clone());
        let x0 = vec![0.0; self.dim];
        let margin = self.cmdp.threshold - self.cmdp.expected_cost(&x0);
        let horizon_mass: f64 = (0..self.cmdp.horizon)
            .map(|t| self.cmdp.discount.powi(t as i32))
            .sum();
        ProblemSpec {
            name: format!("chain_cmdp(S={}, A={})", self.cmdp.n_states, self.cmdp.n_actions),
            dim: self.dim,
            functions: vec![
                Function::new(move |x| -c0.expected_return(x))
                    .with_constants(self.smoothness[0], self.lipschitz[0]),
                Function::new(move |x| c1.expected_cost(x) - c1.threshold)
                    .with_constants(self.smoothness[1], self.lipschitz[1]),
            ],
            // logits are unbounded; this only scales the sampling-radius bias term
            diameter: 20.0,
            x0,
            start_margin: margin,
            value_bound: horizon_mass.max(self.cmdp.threshold),
            mfcq: None,
        }
    }
}

/// Monte-Carlo estimate of `(f⁰, f¹)` and their score-function gradients from
/// `n` episodes.
pub fn cmdp_oracle(problem: &SoftmaxPolicyProblem, x: &[f64], n: usize, rng: &mut Rng) -> BatchEstimate {
    assert!(n > 0, "episode count must be positive");
    let cmdp = &problem.cmdp;
    let pi = cmdp.policy(x);
    let d = problem.dim;
    let na = cmdp.n_actions;
    let mut ret_samples = Vec::with_capacity(n);
    let mut cost_samples = Vec::with_capacity(n);
    let mut ret_grads: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut cost_grads: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut steps: Vec<(usize, usize, f64, f64)> = Vec::with_capacity(cmdp.horizon);
    for _ in 0..n {
        steps.clear();
        let mut s = TabularCmdp::sample_index(&cmdp.init_dist, rng);
        let mut weight = 1.0;
        for _ in 0..cmdp.horizon {
            let a = TabularCmdp::sample_index(&pi[s], rng);
            steps.push((s, a, weight * cmdp.reward[s][a], weight * cmdp.cost[s][a]));
            s = TabularCmdp::sample_index(&cmdp.transition[s][a], rng);
            weight *= cmdp.discount;
        }
        let mut g_ret = vec![0.0; d];
        let mut g_cost = vec![0.0; d];
        let (mut to_go_r, mut to_go_c) = (0.0, 0.0);
        for &(s, a, r, c) in steps.iter().rev() {
            to_go_r += r;
            to_go_c += c;
            for b in 0..na {
                let score = if a == b { 1.0 } else { 0.0 } - pi[s][b];
                g_ret[s * na + b] += score * to_go_r;
                g_cost[s * na + b] += score * to_go_c;
            }
        }
        ret_samples.push(to_go_r);
        cost_samples.push(to_go_c);
        ret_grads.push(g_ret);
        cost_grads.push(g_cost);
    }
    let (ret_mean, ret_se) = mean_and_se(&ret_samples);
    let (cost_mean, cost_se) = mean_and_se(&cost_samples);
    let (ret_grad, ret_gse) = vector_mean_and_se(&ret_grads);
    let (cost_grad, cost_gse) = vector_mean_and_se(&cost_grads);
    BatchEstimate {
        value: vec![-ret_mean, cost_mean - cmdp.threshold],
        grad: vec![ret_grad.into_iter().map(|g| -g).collect(), cost_grad],
        sigma_n: vec![ret_se, cost_se],
        sigma_hat_n: vec![ret_gse, cost_gse],
        b_hat: vec![0.0, 0.0],
        queries_used: n as u64,
        sample_points: vec![x.to_vec()],
    }
}

fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean vector and `√(E‖Gⱼ − Ḡ‖²/n)`.
fn vector_mean_and_se(samples: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let n = samples.len() as f64;
    let d = samples[0].len();
    let mut mean = vec![0.0; d];
    for g in samples {
        for (m, v) in mean.iter_mut().zip(g) {
            *m += v / n;
        }
    }
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let spread: f64 = samples
        .iter()
        .map(|g| g.iter().zip(&mean).map(|(v, m)| (v - m).powi(2)).sum::<f64>())
        .sum::<f64>()
        / (n - 1.0);
    (mean, (spread / n).sqrt())
}

/// Monte-Carlo policy-gradient oracle for the solver. A batch of size `n`
/// rolls `n × episodes_per_estimate` episodes.
#[derive(Debug, Clone)]
pub struct CmdpOracle {
    pub problem: SoftmaxPolicyProblem,
}

impl BatchOracle for CmdpOracle {
    fn num_functions(&self) -> usize {
        2
    }

    fn batch_cost(&self, n: usize) -> u64 {
        (n * self.problem.episodes_per_estimate) as u64
    }

    fn query(&self, x: &[f64], n: usize, _nu: f64, rng: &mut Rng) -> BatchEstimate {
        cmdp_oracle(&self.problem, x, n * self.problem.episodes_per_estimate, rng)
    }
}
