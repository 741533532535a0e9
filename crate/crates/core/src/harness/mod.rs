//! Monte-Carlo orchestration, metrics and file output.

pub mod config;
pub mod metrics;
pub mod oracle;
pub mod output;
pub mod trial;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::trial_seed;

pub use config::{Estimator, ExperimentConfig};
pub use metrics::{aggregate, EstimatorSeries, MetricSeries};
pub use output::emit_outputs;
pub use trial::{run_trial, TrialRecord};

/// Result of [`run_experiment`]: the raw trials and their aggregate.
#[derive(Clone, Debug)]
pub struct ExperimentRun {
    pub records: Vec<TrialRecord>,
    pub series: MetricSeries,
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::invalid("thread count must be at least 1"));
        }
        b = b.num_threads(t);
    }
    b.build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))
}

/// Runs `cfg.trials` trials, in parallel over `threads` workers (all cores when
/// `None`). Trial `t` always uses `trial_seed(master_seed, t)`, so the output
/// does not depend on the worker count.
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentRun> {
    cfg.validate()?;
    let records: Vec<TrialRecord> = pool(threads)?.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| run_trial(cfg, t, trial_seed(cfg.master_seed, t)))
            .collect::<Result<_>>()
    })?;
    let series = aggregate(&records)?;
    Ok(ExperimentRun { records, series })
}

/// One experiment per rule label, all on the same trial seeds.
pub fn run_sweep(cfg: &ExperimentConfig, rules: &[String], threads: Option<usize>) -> Result<Vec<ExperimentRun>> {
    if rules.is_empty() {
        return Err(Error::invalid("sweep needs at least one rule"));
    }
    rules
        .iter()
        .map(|label| {
            let mut c = cfg.clone();
            c.trigger.rule = label.trim().to_string();
            run_experiment(&c, threads)
        })
        .collect()
}
