use crate::error::{Error, Result};
use crate::harness::config::Estimator;
use crate::harness::trial::TrialRecord;
use crate::triggers::TriggerRule;

/// Trial-averaged series of one estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorSeries {
    pub estimator: Estimator,
    /// Per step, `(1/trials) Σ_t (1/N) Σ_i ‖x̂_i − x‖²`.
    pub mse: Vec<f64>,
    /// Per step, NEES averaged over nodes and trials.
    pub nees: Vec<f64>,
    /// Per step, broadcasts averaged over trials. `None` for the CKF.
    pub nob: Option<Vec<f64>>,
    /// Per step, non-trivial fusions that carried a certificate.
    pub cert_events: Vec<usize>,
    /// Per step, how many of those were certified.
    pub cert_ok: Vec<usize>,
    /// Per step, smallest raw ρ among the counted events (`+∞` if none).
    pub rho_min: Vec<f64>,
}

impl EstimatorSeries {
    pub fn steps(&self) -> usize {
        self.mse.len()
    }

    /// Fraction of certified events from `from_step` on; `None` without events.
    pub fn cert_rate(&self, from_step: usize) -> Option<f64> {
        let from = from_step.min(self.steps());
        let events: usize = self.cert_events[from..].iter().sum();
        let ok: usize = self.cert_ok[from..].iter().sum();
        (events > 0).then(|| ok as f64 / events as f64)
    }

    pub fn certificate_events(&self, from_step: usize) -> usize {
        self.cert_events[from_step.min(self.steps())..].iter().sum()
    }

    pub fn rho_min_from(&self, from_step: usize) -> Option<f64> {
        let m = self.rho_min[from_step.min(self.steps())..]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        m.is_finite().then_some(m)
    }

    /// MSE averaged over the last `window` steps.
    pub fn final_mse(&self, window: usize) -> f64 {
        tail_mean(&self.mse, window)
    }

    pub fn mean_nees(&self, from_step: usize) -> f64 {
        let from = from_step.min(self.steps().saturating_sub(1));
        tail_mean(&self.nees, self.steps() - from)
    }

    /// Mean broadcasts per step over the last `window` steps.
    pub fn mean_nob(&self, window: usize) -> Option<f64> {
        self.nob.as_ref().map(|n| tail_mean(n, window))
    }
}

fn tail_mean(xs: &[f64], window: usize) -> f64 {
    let from = xs.len().saturating_sub(window.max(1));
    let tail = &xs[from..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

/// Monte-Carlo summary of one trigger rule.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricSeries {
    pub rule: TriggerRule,
    pub trials: usize,
    pub nodes: usize,
    pub steps: usize,
    pub estimators: Vec<EstimatorSeries>,
}

impl MetricSeries {
    pub fn get(&self, estimator: Estimator) -> Option<&EstimatorSeries> {
        self.estimators.iter().find(|s| s.estimator == estimator)
    }
}

/// Folds trial records, in the given order, into per-step averages.
pub fn aggregate(records: &[TrialRecord]) -> Result<MetricSeries> {
    let first = records
        .first()
        .ok_or_else(|| Error::invalid("cannot aggregate zero trials"))?;
    let steps = first.steps();
    let nodes = first.nodes;
    let estimators: Vec<Estimator> = first.traces.iter().map(|t| t.estimator).collect();
    for r in records {
        let same_estimators = r.traces.len() == estimators.len()
            && r.traces.iter().zip(&estimators).all(|(t, &e)| t.estimator == e);
        if r.steps() != steps || r.nodes != nodes || r.rule != first.rule || !same_estimators {
            return Err(Error::invalid(format!(
                "trial {} does not share the shape of trial {}",
                r.trial, first.trial
            )));
        }
    }
    let trials = records.len() as f64;

    let series = estimators
        .iter()
        .enumerate()
        .map(|(e, &estimator)| {
            let mut s = EstimatorSeries {
                estimator,
                mse: vec![0.0; steps],
                nees: vec![0.0; steps],
                nob: None,
                cert_events: vec![0; steps],
                cert_ok: vec![0; steps],
                rho_min: vec![f64::INFINITY; steps],
            };
            let mut nob = vec![0.0; steps];
            let mut has_rounds = true;
            for r in records {
                let trace = &r.traces[e];
                has_rounds &= trace.rounds.len() == steps;
                for k in 0..steps {
                    s.mse[k] += trace.mse_at(k) / trials;
                    let row = &trace.nees[k];
                    s.nees[k] += row.iter().sum::<f64>() / row.len() as f64 / trials;
                    if let Some(round) = trace.rounds.get(k) {
                        nob[k] += round.nob as f64 / trials;
                    }
                    if let Some(diags) = trace.fusions.get(k) {
                        for d in diags.iter().filter(|d| !d.trivial) {
                            if let Some(c) = d.cert {
                                s.cert_events[k] += 1;
                                s.cert_ok[k] += usize::from(c.certified);
                                s.rho_min[k] = s.rho_min[k].min(c.rho);
                            }
                        }
                    }
                }
            }
            if has_rounds {
                s.nob = Some(nob);
            }
            s
        })
        .collect();

    Ok(MetricSeries {
        rule: first.rule,
        trials: records.len(),
        nodes,
        steps,
        estimators: series,
    })
}
