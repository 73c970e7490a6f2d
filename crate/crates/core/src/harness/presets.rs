//! Ready-made experiment configs with the published schedules.
//!
//! The schedule shape (`ω`, `T_k`, `n_k`) follows the original experiments;
//! `η₀`, the sampling radius and the query budget are our choices.

use std::collections::BTreeMap;
use std::path::PathBuf;

use super::config::{BenchmarkSelection, ExperimentConfig, NoiseConfig};
use crate::error::{Error, Result};
use crate::problem::{Mode, OracleKind, SolverConfig};

fn solver(eta0: f64, eta_final: f64, omega: f64, steps: usize, batch: usize) -> SolverConfig {
    let mut s = SolverConfig::fixed(eta0, steps, batch.max(1), Mode::Nonconvex, OracleKind::ZerothOrder);
    s.eta_final = eta_final;
    s.omega = omega;
    s
}

/// Preset for `family` in dimension `d` with value-noise level `sigma`.
pub fn preset(family: &str, d: usize, sigma: f64) -> Result<ExperimentConfig> {
    let mut params = BTreeMap::new();
    let mut seeds: Vec<u64> = (0..10).collect();
    let solver = match family {
        "quadratic_linear" => {
            // η_{k+1} = 0.7 η_k every 7 steps, n = ⌊d/2⌋, 2000 calls
            let mut s = solver(1e-3, 1e-7, 0.7, 7, d / 2);
            s.nu_override = Some(0.02);
            s.max_total_queries = 2000;
            s
        }
        "rosenbrock" => {
            // η_{k+1} = 0.7 η_k every 5 steps, n = d − 1
            let mut s = solver(1e-3, 1e-6, 0.7, 5, d.saturating_sub(1));
            s.nu_override = Some(0.005);
            s
        }
        "gaussian_ellipsoid" => {
            // η_{k+1} = 0.85 η_k every 3 steps, n = ⌊(d+1)/2⌋
            params.insert("r".to_string(), 0.5);
            let mut s = solver(0.1, 1e-4, 0.85, 3, (d + 1) / 2);
            s.nu_override = Some(0.01);
            s
        }
        "chain_cmdp" => {
            seeds = (0..5).collect();
            SolverConfig::fixed(0.03, 200, 1, Mode::Nonconvex, OracleKind::FirstOrder)
        }
        other => return Err(Error::UnknownFamily(other.to_string())),
    };
    if family != "chain_cmdp" {
        params.insert("d".to_string(), d as f64);
    }
    let config = ExperimentConfig {
        benchmark: BenchmarkSelection {
            family: family.to_string(),
            params,
        },
        solver,
        noise: NoiseConfig::scalar(sigma),
        seeds,
        output_dir: PathBuf::from("lbsgd-output").join(format!("{family}-d{d}")),
    };
    config.validate()?;
    Ok(config)
}
