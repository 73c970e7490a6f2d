//! Independent recount of infeasible query points.

use crate::problem::ProblemSpec;
use crate::solver::RunReport;

/// Re-evaluates the true constraints at every recorded query point (iterates
/// and sampling-radius probes) and counts points with any `fⁱ > 0`.
pub fn audit_safety(report: &RunReport, spec: &ProblemSpec) -> u64 {
    report
        .trajectory
        .iter()
        .flat_map(|r| r.sample_points.iter())
        .filter(|p| (1..spec.functions.len()).any(|i| spec.value(i, p) > 0.0))
        .count() as u64
}

/// Sum of the solver's own per-record flags.
pub fn flagged_records(report: &RunReport) -> u64 {
    report.trajectory.iter().filter(|r| r.violated).count() as u64
}
