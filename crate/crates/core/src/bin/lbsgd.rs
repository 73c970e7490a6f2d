use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lbsgd::barrier::barrier_gradient;
use lbsgd::benchmarks::Benchmark;
use lbsgd::harness::{self, AggregateSummary, ExperimentConfig};
use lbsgd::oracle::{first_order_batch, rng_from_seed, uniform01, NoiseModel};
use lbsgd::problem::validate_problem;

#[derive(Parser)]
#[command(name = "lbsgd", version, about = "Safe stochastic optimization with log barriers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run { config: PathBuf },
    /// Run a preset with the published schedule for a benchmark family.
    Bench {
        family: String,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 0.001)]
        noise: f64,
        /// Override the preset's seed count (seeds 0..N).
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Compare analytic barrier gradients with finite differences.
    CheckGrad {
        family: String,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 20)]
        points: usize,
    },
    /// Re-aggregate the CSVs in an output directory.
    Report { dir: PathBuf },
}

fn print_summary(summary: &AggregateSummary, dir: &std::path::Path) {
    println!("benchmark        {}", summary.benchmark);
    println!("seeds            {}", summary.seeds.len());
    println!("violations       {}", summary.violations_total);
    println!("mean wall time   {:.4} s", summary.mean_wall_time_seconds);
    if let (Some(q), Some(acc)) = (summary.queries.last(), summary.accuracy.median.last()) {
        let label = if summary.optimum.is_some() { "f0 - f*" } else { "f0" };
        println!("final median     {label} = {acc:.6} at {q} oracle calls");
    }
    println!("output           {}", dir.display());
}

fn check_grad(family: &str, d: usize, points: usize) -> lbsgd::Result<bool> {
    let mut params = std::collections::BTreeMap::new();
    if family != "chain_cmdp" {
        params.insert("d".to_string(), d as f64);
    }
    let built = Benchmark::from_name(family, &params)?.build()?;
    let spec = &built.spec;
    for diag in validate_problem(spec) {
        println!("problem check: {diag}");
    }
    if !spec.has_gradients() {
        println!("{} has no analytic gradients; nothing to compare", spec.name);
        return Ok(true);
    }
    let eta = 0.1;
    let noise = NoiseModel::noiseless(spec.functions.len());
    let mut rng = rng_from_seed(0);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < points {
        // random interior points between the start and a random direction
        let scale = 0.9 * spec.start_margin / spec.max_lipschitz().max(1e-12);
        let x: Vec<f64> = spec.x0.iter().map(|v| v + scale * (2.0 * uniform01(&mut rng) - 1.0) / (spec.dim as f64).sqrt()).collect();
        if !spec.is_strictly_feasible(&x) {
            continue;
        }
        let batch = first_order_batch(spec, &noise, &x, 1, &mut rng);
        let (g, _) = barrier_gradient(&batch, eta, 1e-300);
        let h = 1e-6 * (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt());
        let b = |p: &[f64]| lbsgd::barrier::barrier_value(&spec.values(p), eta).unwrap_or(f64::NAN);
        let mut probe = x.clone();
        let mut err2 = 0.0;
        let mut ref2 = 0.0;
        for k in 0..spec.dim {
            probe[k] = x[k] + h;
            let up = b(&probe);
            probe[k] = x[k] - h;
            let down = b(&probe);
            probe[k] = x[k];
            let fd = (up - down) / (2.0 * h);
            err2 += (fd - g[k]).powi(2);
            ref2 += g[k].powi(2);
        }
        let rel = err2.sqrt() / ref2.sqrt().max(1e-12);
        worst = worst.max(rel);
        checked += 1;
    }
    println!("{}: worst relative error over {points} points = {worst:.3e}", spec.name);
    Ok(worst <= 1e-6)
}

fn run(cli: Cli) -> lbsgd::Result<bool> {
    match cli.command {
        Command::Run { config } => {
            let config = ExperimentConfig::load(&config)?;
            let summary = harness::run_experiment(&config)?;
            print_summary(&summary, &config.output_dir);
            Ok(summary.violations_total == 0)
        }
        Command::Bench { family, d, noise, seeds, output_dir } => {
            let mut config = harness::preset(&family, d, noise)?;
            if let Some(n) = seeds {
                config.seeds = (0..n).collect();
            }
            if let Some(dir) = output_dir {
                config.output_dir = dir;
            }
            config.apply_env_override();
            let summary = harness::run_experiment(&config)?;
            print_summary(&summary, &config.output_dir);
            Ok(summary.violations_total == 0)
        }
        Command::CheckGrad { family, d, points } => check_grad(&family, d, points),
        Command::Report { dir } => {
            let summary = harness::report_dir(&dir)?;
            print_summary(&summary, &dir);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
