//! Cross-seed aggregation on a common cumulative-query axis.

use serde::{Deserialize, Serialize};

use super::csv_io::CsvRow;

/// Median and 5%/95% percentile band on a query grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lower: Vec<f64>,
    pub median: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub benchmark: String,
    pub seeds: Vec<u64>,
    /// Optimal value subtracted from `f⁰`; `None` means raw objective values.
    pub optimum: Option<f64>,
    pub queries: Vec<u64>,
    pub accuracy: Band,
    pub max_constraint: Band,
    pub violations_total: u64,
    pub mean_wall_time_seconds: f64,
    pub per_seed: Vec<SeedSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub iterations: usize,
    pub queries_total: u64,
    pub violations: u64,
    pub final_f0: Option<f64>,
    pub final_max_constraint: Option<f64>,
    pub wall_time_seconds: f64,
}

/// Linear-interpolation percentile of an ascending slice, `q ∈ [0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Value of the latest row with `queries_cum ≤ q`.
fn step_value(rows: &[CsvRow], q: u64, pick: impl Fn(&CsvRow) -> f64) -> Option<f64> {
    let idx = rows.partition_point(|r| r.queries_cum <= q);
    (idx > 0).then(|| pick(&rows[idx - 1]))
}

/// Builds the query grid (every query count at which some run has a record,
/// starting once all runs have one) and the pointwise bands.
pub fn query_bands(runs: &[Vec<CsvRow>], optimum: Option<f64>) -> (Vec<u64>, Band, Band) {
    let non_empty: Vec<&Vec<CsvRow>> = runs.iter().filter(|r| !r.is_empty()).collect();
    let empty = || Band { lower: vec![], median: vec![], upper: vec![] };
    if non_empty.is_empty() {
        return (vec![], empty(), empty());
    }
    let start = non_empty.iter().map(|r| r[0].queries_cum).max().unwrap();
    let mut grid: Vec<u64> = non_empty
        .iter()
        .flat_map(|r| r.iter().map(|row| row.queries_cum))
        .filter(|q| *q >= start)
        .collect();
    grid.sort_unstable();
    grid.dedup();
    let shift = optimum.unwrap_or(0.0);
    let band = |pick: &dyn Fn(&CsvRow) -> f64| {
        let mut out = empty();
        for &q in &grid {
            let mut vals: Vec<f64> = non_empty.iter().filter_map(|r| step_value(r, q, pick)).collect();
            vals.sort_by(f64::total_cmp);
            out.lower.push(percentile(&vals, 0.05));
            out.median.push(percentile(&vals, 0.5));
            out.upper.push(percentile(&vals, 0.95));
        }
        out
    };
    let accuracy = band(&|r: &CsvRow| r.f0_true - shift);
    let constraint = band(&|r: &CsvRow| r.max_constraint_true);
    (grid, accuracy, constraint)
}
