//! Experiment configuration files (TOML).
//!
//! ```toml
//! seeds = [0, 1, 2]            # default: 0..10
//! output_dir = "out/quad4"
//!
//! [benchmark]
//! family = "quadratic_linear"  # quadratic_linear | rosenbrock | gaussian_ellipsoid | chain_cmdp
//! params = { d = 4 }
//!
//! [solver]
//! eta0 = 0.001
//! eta_final = 1e-7
//! omega = 0.7
//! steps_per_round = 7
//! batch_size = 2
//! mode = "nonconvex"           # nonconvex | convex | strongly_convex
//! oracle_kind = "zeroth_order" # zeroth_order | first_order
//! nu_override = 0.02           # optional
//! max_total_queries = 2000     # optional
//!
//! [noise]                      # scalars apply to every function; lists give f⁰..fᵐ
//! sigma = 0.001
//! sigma_hat = 0.0
//! b_hat = 0.0
//! ```
//!
//! `LBSGD_OUTPUT_DIR` overrides `output_dir` when set.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::benchmarks::Benchmark;
use crate::error::{Error, Result};
use crate::oracle::NoiseModel;
use crate::problem::SolverConfig;

pub const OUTPUT_DIR_ENV: &str = "LBSGD_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSelection {
    pub family: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

/// One value for every function, or one per function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerFunction {
    Scalar(f64),
    List(Vec<f64>),
}

impl Default for PerFunction {
    fn default() -> Self {
        PerFunction::Scalar(0.0)
    }
}

impl PerFunction {
    fn expand(&self, k: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            PerFunction::Scalar(v) => Ok(vec![*v; k]),
            PerFunction::List(v) if v.len() == k => Ok(v.clone()),
            PerFunction::List(v) => Err(Error::Config(format!(
                "noise.{what} lists {} values but the problem has {k} functions",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma: PerFunction,
    pub sigma_hat: PerFunction,
    pub b_hat: PerFunction,
}

impl NoiseConfig {
    pub fn scalar(sigma: f64) -> Self {
        NoiseConfig {
            sigma: PerFunction::Scalar(sigma),
            ..NoiseConfig::default()
        }
    }

    pub fn model(&self, num_functions: usize) -> Result<NoiseModel> {
        let model = NoiseModel {
            sigma: self.sigma.expand(num_functions, "sigma")?,
            sigma_hat: self.sigma_hat.expand(num_functions, "sigma_hat")?,
            b_hat: self.b_hat.expand(num_functions, "b_hat")?,
        };
        if !model.is_valid() {
            return Err(Error::Config("noise levels must be finite and non-negative".into()));
        }
        Ok(model)
    }
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("lbsgd-output")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub benchmark: BenchmarkSelection,
    pub solver: SolverConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Reads and validates a config file, then applies the environment override.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml_str(&text, path)?;
        config.apply_env_override();
        Ok(config)
    }

    pub fn apply_env_override(&mut self) {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|d| !d.is_empty()) {
            self.output_dir = PathBuf::from(dir);
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("experiment configs always serialize")
    }

    pub fn benchmark(&self) -> Result<Benchmark> {
        Benchmark::from_name(&self.benchmark.family, &self.benchmark.params)
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return Err(Error::Config(format!("seed {dup} is listed twice")));
        }
        let built = self.benchmark()?.build()?;
        self.noise.model(built.spec.functions.len())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
seeds = [3, 4]
output_dir = "runs/q"

[benchmark]
family = "quadratic_linear"
params = { d = 2 }

[solver]
eta0 = 0.01
eta_final = 0.001
omega = 0.7
steps_per_round = 7
batch_size = 1
mode = "nonconvex"
oracle_kind = "zeroth_order"

[noise]
sigma = 0.001
"#;

    #[test]
    fn parses_documented_schema() {
        let config = ExperimentConfig::from_toml_str(SAMPLE, Path::new("x.toml")).unwrap();
        assert_eq!(config.seeds, vec![3, 4]);
        assert_eq!(config.solver.delta_hat, 0.05);
        let noise = config.noise.model(5).unwrap();
        assert_eq!(noise.sigma, vec![0.001; 5]);
        assert_eq!(noise.sigma_hat, vec![0.0; 5]);
        let again = ExperimentConfig::from_toml_str(&config.to_toml_string(), Path::new("y")).unwrap();
        assert_eq!(again, config);
    }

    #[test]
    fn default_seed_list_has_ten_entries() {
        let text = SAMPLE.replace("seeds = [3, 4]", "");
        let config = ExperimentConfig::from_toml_str(&text, Path::new("x")).unwrap();
        assert_eq!(config.seeds, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_bad_configs() {
        let cases = [
            SAMPLE.replace("[3, 4]", "[3, 3]"),
            SAMPLE.replace("[3, 4]", "[]"),
            SAMPLE.replace("omega = 0.7", "omega = 1.5"),
            SAMPLE.replace("sigma = 0.001", "sigma = [0.001, 0.001]"),
            SAMPLE.replace("sigma = 0.001", "sigma = -1.0"),
            SAMPLE.replace("quadratic_linear", "himmelblau"),
            SAMPLE.replace("batch_size = 1", "batch_size = 1\nturbo = true"),
        ];
        for text in cases {
            assert!(ExperimentConfig::from_toml_str(&text, Path::new("x")).is_err(), "{text}");
        }
    }

    #[test]
    fn parse_errors_name_the_file() {
        let err = ExperimentConfig::from_toml_str("seeds = [", Path::new("bad.toml")).unwrap_err();
        assert!(err.to_string().contains("bad.toml"));
    }
}
