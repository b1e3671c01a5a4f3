//! Deterministic parallel Monte Carlo harness.
//!
//! Every replica draws from its own stream keyed by
//! `(master_seed, experiment, n_index, replica)` and results are gathered in
//! replica order, so outputs are identical for any number of workers.

mod config;
mod scans;
mod validation;

pub use config::{ExperimentConfig, Mode, PSchedule, SCHEMA_VERSION};
pub use scans::*;
pub use validation::*;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::capacity::CapacityError;
use crate::distributions::PmfError;
use crate::ising::IsingError;
use crate::pruned_law::PrunedLawError;
use crate::tree::TreeError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("schedule gives p_n = {p} at n = {n}, outside (0, 1]")]
    ScheduleOutOfRange { n: usize, p: f64 },
    #[error("configuration mode is {found:?} but this run needs {expected:?}")]
    WrongMode { expected: Mode, found: Mode },
    #[error("could not build a worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Pmf(#[from] PmfError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    PrunedLaw(#[from] PrunedLawError),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
    #[error(transparent)]
    Ising(#[from] IsingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Stream namespace of each experiment.
pub mod experiment_id {
    pub const MAGNETIZATION: u64 = 1;
    pub const CAPACITY: u64 = 2;
    pub const VALIDATION: u64 = 3;
    pub const PRUNE_DEMO: u64 = 4;
}

/// Default worker count: the available parallelism of the machine.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Evaluates `f(0), ..., f(count - 1)` on `workers` threads, results in index order.
pub fn run_replicas<T, F>(workers: usize, count: usize, f: F) -> Result<Vec<T>, ExperimentError>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    Ok(pool.install(|| (0..count).into_par_iter().map(&f).collect()))
}

/// One summary statistic at one depth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub n: usize,
    pub p_n: f64,
    /// What `estimate` measures, e.g. `mean_r` or `p_m_gt_0.05`.
    pub quantity: String,
    pub estimate: f64,
    pub std_error: f64,
    pub replicas: usize,
    /// Confidence interval; Wilson for probabilities, +-1.96 standard errors otherwise.
    pub ci_low: f64,
    pub ci_high: f64,
    /// Analytic bound for the quantity, NaN when none applies.
    pub bound: f64,
}

impl SummaryRow {
    /// Row for a sample mean with a normal confidence interval.
    pub fn mean(n: usize, p_n: f64, quantity: impl Into<String>, values: &[f64], bound: f64) -> Self {
        let (estimate, std_error) = crate::stats::mean_and_std_error(values);
        Self {
            n,
            p_n,
            quantity: quantity.into(),
            estimate,
            std_error,
            replicas: values.len(),
            ci_low: estimate - 1.96 * std_error,
            ci_high: estimate + 1.96 * std_error,
            bound,
        }
    }

    /// Row for a proportion with a Wilson interval.
    pub fn proportion(n: usize, p_n: f64, quantity: impl Into<String>, successes: usize, trials: usize) -> Self {
        let estimate = successes as f64 / trials as f64;
        let std_error = (estimate * (1.0 - estimate) / trials as f64).sqrt();
        let (ci_low, ci_high) = crate::stats::wilson_interval(successes, trials, 1.96);
        Self {
            n,
            p_n,
            quantity: quantity.into(),
            estimate,
            std_error,
            replicas: trials,
            ci_low,
            ci_high,
            bound: f64::NAN,
        }
    }
}

/// Renders summary rows as CSV.
pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let header = ["n", "p_n", "quantity", "estimate", "std_error", "replicas", "ci_low", "ci_high", "bound"];
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        let floats = [r.estimate, r.std_error];
        out.push_str(&format!("{},{},{},", r.n, crate::io::fmt_f64(r.p_n), r.quantity));
        for x in floats {
            out.push_str(&crate::io::fmt_f64(x));
            out.push(',');
        }
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.replicas,
            crate::io::fmt_f64(r.ci_low),
            crate::io::fmt_f64(r.ci_high),
            crate::io::fmt_f64(r.bound)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replicas_come_back_in_order() {
        for workers in [1, 3] {
            let out = run_replicas(workers, 100, |i| i * i).unwrap();
            assert_eq!(out, (0..100).map(|i| i * i).collect::<Vec<_>>());
        }
    }

    #[test]
    fn summary_rows() {
        let r = SummaryRow::proportion(3, 0.5, "p", 0, 10);
        assert_eq!(r.estimate, 0.0);
        assert!(r.ci_low == 0.0 && r.ci_high > 0.0);
        let r = SummaryRow::mean(3, 0.5, "m", &[1.0, 3.0], 4.0);
        assert_eq!(r.estimate, 2.0);
        let csv = summary_csv(&[r]);
        assert!(csv.starts_with("n,p_n,quantity,estimate"));
        assert!(csv.lines().nth(1).unwrap().starts_with("3,5.0000000000000000e-1,m,2.0000000000000000e0,"));
    }
}
