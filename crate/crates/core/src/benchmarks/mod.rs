//! Benchmark problems, selectable by family name and a parameter map.

pub mod cmdp;
pub mod synthetic;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::ProblemSpec;

pub use cmdp::{cmdp_oracle, make_chain_cmdp, ChainConfig, CmdpOracle, SoftmaxPolicyProblem, TabularCmdp};
pub use synthetic::{
    gaussian_ellipsoid_optimum, make_gaussian_ellipsoid, make_quadratic_linear, make_rosenbrock,
    quadratic_linear_optimum,
};

pub const FAMILIES: [&str; 4] = ["quadratic_linear", "rosenbrock", "gaussian_ellipsoid", "chain_cmdp"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Benchmark {
    QuadraticLinear { d: usize },
    Rosenbrock { d: usize },
    GaussianEllipsoid { d: usize, r: f64 },
    ChainCmdp(ChainConfig),
}

/// A constructed benchmark. `policy` is set for the CMDP family, whose oracle
/// samples episodes instead of perturbing `spec`.
#[derive(Debug, Clone)]
pub struct BuiltBenchmark {
    pub spec: ProblemSpec,
    pub policy: Option<SoftmaxPolicyProblem>,
    /// Known optimal objective value, when available in closed form.
    pub optimum: Option<f64>,
}

fn param(params: &BTreeMap<String, f64>, key: &str, default: Option<f64>) -> Result<f64> {
    params
        .get(key)
        .copied()
        .or(default)
        .ok_or_else(|| Error::Config(format!("missing benchmark parameter `{key}`")))
}

fn count(params: &BTreeMap<String, f64>, key: &str, default: Option<usize>) -> Result<usize> {
    let v = param(params, key, default.map(|d| d as f64))?;
    if v < 0.0 || v.fract() != 0.0 {
        return Err(Error::Config(format!("benchmark parameter `{key}` must be a non-negative integer, got {v}")));
    }
    Ok(v as usize)
}

impl Benchmark {
    /// Parses `family` with parameters such as `d`, `r` or the chain settings.
    pub fn from_name(family: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let allowed: &[&str] = match family {
            "quadratic_linear" | "rosenbrock" => &["d"],
            "gaussian_ellipsoid" => &["d", "r"],
            "chain_cmdp" => &["threshold", "discount", "horizon", "episodes_per_estimate"],
            other => return Err(Error::UnknownFamily(other.to_string())),
        };
        if let Some(extra) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown parameter `{extra}` for benchmark `{family}`")));
        }
        Ok(match family {
            "quadratic_linear" => Benchmark::QuadraticLinear { d: count(params, "d", None)? },
            "rosenbrock" => Benchmark::Rosenbrock { d: count(params, "d", None)? },
            "gaussian_ellipsoid" => Benchmark::GaussianEllipsoid {
                d: count(params, "d", None)?,
                r: param(params, "r", Some(0.5))?,
            },
            _ => {
                let base = ChainConfig::default();
                Benchmark::ChainCmdp(ChainConfig {
                    threshold: param(params, "threshold", Some(base.threshold))?,
                    discount: param(params, "discount", Some(base.discount))?,
                    horizon: count(params, "horizon", Some(base.horizon))?,
                    episodes_per_estimate: count(params, "episodes_per_estimate", Some(base.episodes_per_estimate))?,
                    ..base
                })
            }
        })
    }

    pub fn family(&self) -> &'static str {
        match self {
            Benchmark::QuadraticLinear { .. } => FAMILIES[0],
            Benchmark::Rosenbrock { .. } => FAMILIES[1],
            Benchmark::GaussianEllipsoid { .. } => FAMILIES[2],
            Benchmark::ChainCmdp(_) => FAMILIES[3],
        }
    }

    pub fn build(&self) -> Result<BuiltBenchmark> {
        Ok(match self {
            Benchmark::QuadraticLinear { d } => BuiltBenchmark {
                spec: make_quadratic_linear(*d)?,
                policy: None,
                optimum: Some(quadratic_linear_optimum(*d).1),
            },
            Benchmark::Rosenbrock { d } => BuiltBenchmark {
                spec: make_rosenbrock(*d)?,
                policy: None,
                optimum: None,
            },
            Benchmark::GaussianEllipsoid { d, r } => BuiltBenchmark {
                spec: make_gaussian_ellipsoid(*d, *r)?,
                policy: None,
                optimum: Some(gaussian_ellipsoid_optimum(*d, *r).1),
            },
            Benchmark::ChainCmdp(config) => {
                let problem = make_chain_cmdp(config)?;
                BuiltBenchmark {
                    spec: problem.spec(),
                    policy: Some(problem),
                    optimum: None,
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_family() {
        let mut p = BTreeMap::new();
        p.insert("d".to_string(), 3.0);
        for fam in &FAMILIES[..3] {
            let b = Benchmark::from_name(fam, &p).unwrap();
            assert_eq!(b.family(), *fam);
            assert_eq!(b.build().unwrap().spec.dim, 3);
        }
        let chain = Benchmark::from_name("chain_cmdp", &BTreeMap::new()).unwrap();
        assert_eq!(chain.build().unwrap().spec.dim, 12);
    }

    #[test]
    fn rejects_unknown_names_and_params() {
        let empty = BTreeMap::new();
        assert!(matches!(Benchmark::from_name("himmelblau", &empty), Err(Error::UnknownFamily(_))));
        assert!(Benchmark::from_name("rosenbrock", &empty).is_err());
        let mut p = BTreeMap::new();
        p.insert("d".to_string(), 2.5);
        assert!(Benchmark::from_name("rosenbrock", &p).is_err());
        p.insert("d".to_string(), 2.0);
        p.insert("radius".to_string(), 1.0);
        assert!(Benchmark::from_name("rosenbrock", &p).is_err());
    }
}
