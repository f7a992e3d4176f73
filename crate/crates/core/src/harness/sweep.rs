//! One-axis parameter sweeps over multiple seeds, with aggregation.

use rayon::prelude::*;
use serde::Serialize;

use super::config::{apply_axis, RunConfig};
use super::trial::{run_trial, TrialResult};
use super::HarnessError;

/// Aggregate metrics for one axis value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub seeds: usize,
    /// Percentage of trials with no safety violation.
    pub safe_pct: f64,
    /// Mean goal-reaching time over goal-reaching trials; `None` when no
    /// trial reached the goal.
    pub mean_goal_time: Option<f64>,
    /// Mean backup ratio, percent.
    pub mean_backup_pct: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub axis: String,
    pub rows: Vec<SweepRow>,
    /// Per-trial results, grouped by axis value in `rows` order.
    pub trials: Vec<Vec<TrialResult>>,
}

/// Aggregate one group of trials. Shared by the sweep runner and by
/// re-aggregation checks over emitted per-trial files.
pub fn aggregate(value: f64, trials: &[(bool, Option<f64>, f64)]) -> SweepRow {
    let n = trials.len();
    let safe = trials.iter().filter(|(s, _, _)| *s).count();
    let reaching: Vec<f64> = trials.iter().filter_map(|(_, g, _)| *g).collect();
    let mean_goal_time = if reaching.is_empty() {
        None
    } else {
        Some(reaching.iter().sum::<f64>() / reaching.len() as f64)
    };
    let mean_backup =
        trials.iter().map(|(_, _, b)| *b).sum::<f64>() / n.max(1) as f64;
    SweepRow {
        value,
        seeds: n,
        safe_pct: 100.0 * safe as f64 / n.max(1) as f64,
        mean_goal_time,
        mean_backup_pct: 100.0 * mean_backup,
    }
}

fn aggregate_results(value: f64, trials: &[TrialResult]) -> SweepRow {
    let tuples: Vec<(bool, Option<f64>, f64)> = trials
        .iter()
        .map(|t| (t.safe, t.goal_time, t.backup_ratio))
        .collect();
    aggregate(value, &tuples)
}

/// Run every (axis value, seed) trial and aggregate one row per value.
/// Trials are independent and run in the rayon pool; results are collected
/// in a fixed order so aggregation does not depend on scheduling.
pub fn run_sweep(cfg: &RunConfig) -> Result<SweepTable, HarnessError> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| HarnessError::Config("no [sweep] section in config".into()))?;
    cfg.validate()?;

    let jobs: Vec<(usize, u64)> = sweep
        .values
        .iter()
        .enumerate()
        .flat_map(|(vi, _)| sweep.seeds.iter().map(move |s| (vi, *s)))
        .collect();

    let results: Vec<Result<TrialResult, HarnessError>> = jobs
        .par_iter()
        .map(|(vi, seed)| {
            let gk = apply_axis(&cfg.gatekeeper, sweep.axis, sweep.values[*vi]);
            run_trial(
                &cfg.scenario,
                &gk,
                *seed,
                cfg.sim.max_steps,
                cfg.sim.write_trajectories,
            )
        })
        .collect();

    let mut by_value: Vec<Vec<TrialResult>> = sweep.values.iter().map(|_| vec![]).collect();
    for ((vi, _), result) in jobs.into_iter().zip(results) {
        by_value[vi].push(result?);
    }

    let rows = sweep
        .values
        .iter()
        .zip(&by_value)
        .map(|(v, trials)| aggregate_results(*v, trials))
        .collect();

    Ok(SweepTable {
        axis: sweep.axis.as_str().to_string(),
        rows,
        trials: by_value,
    })
}
