//! Experiment configs, multi-seed execution, auditing and artifact output.

pub mod aggregate;
pub mod audit;
pub mod config;
pub mod csv_io;
pub mod plot;
pub mod presets;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::benchmarks::{BuiltBenchmark, CmdpOracle};
use crate::error::{Error, Result};
use crate::oracle::{rng_from_seed, BatchOracle, FirstOrderOracle, NoiseModel, ZerothOrderOracle};
use crate::problem::{OracleKind, SolverConfig};
use crate::solver::{solve, RunReport};

pub use aggregate::{AggregateSummary, Band, SeedSummary};
pub use audit::audit_safety;
pub use config::ExperimentConfig;
pub use csv_io::{emit_csv, read_csv, CsvRow};
pub use presets::preset;

pub const SUMMARY_FILE: &str = "summary.json";

/// Oracle for a built benchmark. The CMDP always uses its episode sampler.
pub fn make_oracle(built: &BuiltBenchmark, kind: OracleKind, noise: &NoiseModel) -> Result<Box<dyn BatchOracle>> {
    if let Some(policy) = &built.policy {
        return Ok(Box::new(CmdpOracle { problem: policy.clone() }));
    }
    let spec = built.spec.clone();
    Ok(match kind {
        OracleKind::FirstOrder if !spec.has_gradients() => {
            return Err(Error::Config(format!("{} has no gradients for a first-order oracle", spec.name)))
        }
        OracleKind::FirstOrder => Box::new(FirstOrderOracle { spec, noise: noise.clone() }),
        OracleKind::ZerothOrder => Box::new(ZerothOrderOracle { spec, noise: noise.clone() }),
    })
}

/// One seeded run; the seed replaces `solver.seed`.
pub fn run_seed(built: &BuiltBenchmark, solver: &SolverConfig, noise: &NoiseModel, seed: u64) -> Result<RunReport> {
    let oracle = make_oracle(built, solver.oracle_kind, noise)?;
    let config = SolverConfig { seed, ..solver.clone() };
    solve(&built.spec, &config, oracle.as_ref(), &mut rng_from_seed(seed))
}

/// Runs every seed (in parallel), returning reports in seed-list order.
pub fn run_all(config: &ExperimentConfig) -> Result<(BuiltBenchmark, Vec<RunReport>)> {
    config.validate()?;
    let built = config.benchmark()?.build()?;
    let noise = config.noise.model(built.spec.functions.len())?;
    let reports = config
        .seeds
        .par_iter()
        .map(|&seed| run_seed(&built, &config.solver, &noise, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok((built, reports))
}

pub fn seed_csv_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.csv"))
}

pub fn summarize(
    benchmark: &str,
    optimum: Option<f64>,
    seeds: &[u64],
    runs: &[Vec<CsvRow>],
    per_seed: Vec<SeedSummary>,
) -> AggregateSummary {
    let (queries, accuracy, max_constraint) = aggregate::query_bands(runs, optimum);
    let mean_wall = per_seed.iter().map(|s| s.wall_time_seconds).sum::<f64>() / per_seed.len().max(1) as f64;
    AggregateSummary {
        benchmark: benchmark.to_string(),
        seeds: seeds.to_vec(),
        optimum,
        queries,
        accuracy,
        max_constraint,
        violations_total: per_seed.iter().map(|s| s.violations).sum(),
        mean_wall_time_seconds: mean_wall,
        per_seed,
    }
}

/// Writes `summary.json` and the two SVG plots.
pub fn write_summary(dir: &Path, summary: &AggregateSummary) -> Result<()> {
    let json = serde_json::to_string_pretty(summary).expect("summaries always serialize");
    let path = dir.join(SUMMARY_FILE);
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    let acc_label = if summary.optimum.is_some() { "f0 - f*" } else { "f0" };
    let plots = [
        (
            "accuracy.svg",
            plot::band_svg(&format!("{}: accuracy", summary.benchmark), acc_label, &summary.queries, &summary.accuracy, None),
        ),
        (
            "constraint.svg",
            plot::band_svg(
                &format!("{}: max constraint", summary.benchmark),
                "max_i f_i",
                &summary.queries,
                &summary.max_constraint,
                Some(0.0),
            ),
        ),
    ];
    for (name, svg) in plots {
        let path = dir.join(name);
        std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Runs all seeds, writes per-seed CSVs, `summary.json` and plots into
/// `config.output_dir`, and returns the aggregate.
pub fn run_experiment(config: &ExperimentConfig) -> Result<AggregateSummary> {
    let (built, reports) = run_all(config)?;
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut runs = Vec::with_capacity(reports.len());
    let mut per_seed = Vec::with_capacity(reports.len());
    for (seed, report) in config.seeds.iter().zip(&reports) {
        emit_csv(report, &seed_csv_path(dir, *seed))?;
        let last = report.trajectory.last();
        per_seed.push(SeedSummary {
            seed: *seed,
            iterations: report.iterations_total,
            queries_total: report.queries_total,
            violations: audit_safety(report, &built.spec),
            final_f0: last.map(|r| r.f0_true),
            final_max_constraint: last.map(|r| r.max_constraint_true),
            wall_time_seconds: report.wall_time_seconds,
        });
        runs.push(csv_io::rows(report));
    }
    let summary = summarize(&built.spec.name, built.optimum, &config.seeds, &runs, per_seed);
    write_summary(dir, &summary)?;
    Ok(summary)
}

/// Re-aggregates the `seed_*.csv` files in `dir`. Metadata (benchmark name,
/// optimum, wall times) is taken from an existing `summary.json` if present.
pub fn report_dir(dir: &Path) -> Result<AggregateSummary> {
    let listing = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut seeds: Vec<u64> = Vec::new();
    for entry in listing {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(seed) = name.strip_prefix("seed_").and_then(|s| s.strip_suffix(".csv")) {
            if let Ok(seed) = seed.parse() {
                seeds.push(seed);
            }
        }
    }
    seeds.sort_unstable();
    if seeds.is_empty() {
        return Err(Error::Parse {
            path: dir.to_path_buf(),
            message: "no seed_*.csv files found".into(),
        });
    }
    let previous: Option<AggregateSummary> = std::fs::read_to_string(dir.join(SUMMARY_FILE))
        .ok()
        .and_then(|text| serde_json::from_str(&text).ok());
    let mut runs = Vec::new();
    let mut per_seed = Vec::new();
    for &seed in &seeds {
        let rows = read_csv(&seed_csv_path(dir, seed))?;
        let wall = previous
            .as_ref()
            .and_then(|p| p.per_seed.iter().find(|s| s.seed == seed))
            .map_or(0.0, |s| s.wall_time_seconds);
        per_seed.push(SeedSummary {
            seed,
            iterations: rows.len(),
            queries_total: rows.last().map_or(0, |r| r.queries_cum),
            violations: rows.iter().filter(|r| r.violated).count() as u64,
            final_f0: rows.last().map(|r| r.f0_true),
            final_max_constraint: rows.last().map(|r| r.max_constraint_true),
            wall_time_seconds: wall,
        });
        runs.push(rows);
    }
    let (name, optimum) = previous.map_or((dir.display().to_string(), None), |p| (p.benchmark, p.optimum));
    let summary = summarize(&name, optimum, &seeds, &runs, per_seed);
    write_summary(dir, &summary)?;
    Ok(summary)
}
