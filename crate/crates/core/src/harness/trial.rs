use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::filter::{
    ckf_step, consensus_dkf_complete, eco_dkf_complete, prepare, EcoOptions, EcoStep, GaussianBelief, InfoMessage,
    NodeState, Prepared,
};
use crate::harness::config::{Estimator, ExperimentConfig};
use crate::netsim::{deliver, RoundLog, Topology};
use crate::rng::{stream, Stream};
use crate::sysmodel::{make_scenario, measure, step_truth, Scenario};
use crate::triggers::{decide, TriggerRule};

/// Certificate summary kept per fusion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CertDiag {
    pub rank: usize,
    pub rho: f64,
    pub certified: bool,
    pub trace_x: f64,
    pub gap: f64,
}

/// What one node's fusion produced at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionDiag {
    /// `(sender id, λ*)`, self first.
    pub weights: Vec<(usize, f64)>,
    pub objective: f64,
    pub lemma3_residual: f64,
    /// `|Σλ* − 1|`
    pub lambda_sum_error: f64,
    pub trivial: bool,
    pub cert: Option<CertDiag>,
}

impl FusionDiag {
    fn from_step(step: &EcoStep) -> Self {
        let f = &step.fusion;
        FusionDiag {
            weights: f.ids.iter().copied().zip(f.lambda_star.iter().copied()).collect(),
            objective: f.objective,
            lemma3_residual: step.lemma3_residual,
            lambda_sum_error: (f.lambda_star.iter().sum::<f64>() - 1.0).abs(),
            trivial: step.trivial,
            cert: step.certificate.as_ref().map(|c| CertDiag {
                rank: c.rank,
                rho: c.rho,
                certified: c.certified,
                trace_x: c.trace_x,
                gap: c.gap,
            }),
        }
    }
}

/// Per-step history of one estimator within a trial.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorTrace {
    pub estimator: Estimator,
    /// `[step][node]` squared errors `‖x̂ − x‖²`; the CKF has a single column.
    pub sq_err: Vec<Vec<f64>>,
    /// `[step][node]` normalized estimation error squared.
    pub nees: Vec<Vec<f64>>,
    /// Delivery logs, one per step, for estimators that exchange messages.
    pub rounds: Vec<RoundLog>,
    /// `[step][node]`, ECO-DKF variants only.
    pub fusions: Vec<Vec<FusionDiag>>,
}

impl EstimatorTrace {
    fn new(estimator: Estimator, horizon: usize) -> Self {
        EstimatorTrace {
            estimator,
            sq_err: Vec::with_capacity(horizon),
            nees: Vec::with_capacity(horizon),
            rounds: Vec::new(),
            fusions: Vec::new(),
        }
    }

    /// Node-averaged squared error at `step`.
    pub fn mse_at(&self, step: usize) -> f64 {
        let row = &self.sq_err[step];
        row.iter().sum::<f64>() / row.len() as f64
    }

    /// Node-averaged squared error averaged over the last `window` steps.
    pub fn final_mse(&self, window: usize) -> f64 {
        let steps = self.sq_err.len();
        let from = steps.saturating_sub(window.max(1));
        (from..steps).map(|k| self.mse_at(k)).sum::<f64>() / (steps - from) as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub rule: TriggerRule,
    pub nodes: usize,
    /// True state after each step.
    pub truth: Vec<Vec<f64>>,
    pub traces: Vec<EstimatorTrace>,
}

impl TrialRecord {
    pub fn trace(&self, estimator: Estimator) -> Option<&EstimatorTrace> {
        self.traces.iter().find(|t| t.estimator == estimator)
    }

    pub fn steps(&self) -> usize {
        self.truth.len()
    }
}

struct EcoRun {
    trace: EstimatorTrace,
    topology: Topology,
    nodes: Vec<NodeState>,
    trigger_rngs: Vec<ChaCha8Rng>,
}

impl EcoRun {
    fn step(
        &mut self,
        scenario: &Scenario,
        rule: &TriggerRule,
        zs: &[Vec<f64>],
        truth: &[f64],
        k: usize,
        options: EcoOptions,
    ) -> Result<()> {
        let sys = &scenario.system;
        let prepared: Vec<Prepared> = self
            .nodes
            .iter()
            .zip(&scenario.sensors)
            .zip(zs)
            .map(|((node, sensor), z)| prepare(&node.belief, sys, sensor, z).map_err(|e| e.at_node(node.id, k)))
            .collect::<Result<_>>()?;
        let g: Vec<bool> = self
            .nodes
            .iter()
            .zip(self.trigger_rngs.iter_mut())
            .map(|(node, rng)| decide(rule, &node.trigger_context(), rng).map_err(|e| e.at_node(node.id, k)))
            .collect::<Result<_>>()?;
        let round = deliver(&self.topology, &g, k)?;

        let mut diags = Vec::with_capacity(self.nodes.len());
        let mut sq = Vec::with_capacity(self.nodes.len());
        let mut nees = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter_mut().enumerate() {
            let received: Vec<&InfoMessage> = round.inboxes[i].iter().map(|&j| &prepared[j].message).collect();
            let out = eco_dkf_complete(node, &prepared[i], &received, g[i], k, options)?;
            diags.push(FusionDiag::from_step(&out));
            sq.push(node.belief.squared_error(truth));
            nees.push(node.belief.nees(truth).map_err(|e| e.at_node(i, k))?);
        }
        self.trace.fusions.push(diags);
        self.trace.sq_err.push(sq);
        self.trace.nees.push(nees);
        self.trace.rounds.push(round);
        Ok(())
    }
}

struct ConsensusRun {
    trace: EstimatorTrace,
    beliefs: Vec<GaussianBelief>,
}

impl ConsensusRun {
    fn step(&mut self, scenario: &Scenario, zs: &[Vec<f64>], truth: &[f64], k: usize) -> Result<()> {
        let sys = &scenario.system;
        let prepared: Vec<Prepared> = self
            .beliefs
            .iter()
            .zip(&scenario.sensors)
            .zip(zs)
            .enumerate()
            .map(|(i, ((b, sensor), z))| prepare(b, sys, sensor, z).map_err(|e| e.at_node(i, k)))
            .collect::<Result<_>>()?;
        // time-triggered on the base graph
        let round = deliver(&scenario.topology, &vec![true; self.beliefs.len()], k)?;
        let mut sq = Vec::with_capacity(self.beliefs.len());
        let mut nees = Vec::with_capacity(self.beliefs.len());
        for (i, belief) in self.beliefs.iter_mut().enumerate() {
            let received: Vec<&InfoMessage> = round.inboxes[i].iter().map(|&j| &prepared[j].message).collect();
            *belief = consensus_dkf_complete(&prepared[i], &received).map_err(|e| e.at_node(i, k))?;
            sq.push(belief.squared_error(truth));
            nees.push(belief.nees(truth).map_err(|e| e.at_node(i, k))?);
        }
        self.trace.sq_err.push(sq);
        self.trace.nees.push(nees);
        self.trace.rounds.push(round);
        Ok(())
    }
}

struct CkfRun {
    trace: EstimatorTrace,
    belief: GaussianBelief,
}

enum Runner {
    Eco(EcoRun),
    Consensus(ConsensusRun),
    Ckf(CkfRun),
}

/// Trigger streams of the all-to-all variant are offset so they never alias
/// the plain ECO-DKF streams.
const ATA_STREAM_OFFSET: usize = 1 << 20;

/// Simulates one Monte-Carlo trial with every configured estimator in lockstep
/// on the same truth, measurements and priors.
pub fn run_trial(cfg: &ExperimentConfig, trial: usize, seed: u64) -> Result<TrialRecord> {
    run_trial_inner(cfg, trial, seed).map_err(|e| e.in_trial(trial))
}

fn run_trial_inner(cfg: &ExperimentConfig, trial: usize, seed: u64) -> Result<TrialRecord> {
    let rule = cfg.trigger_rule()?;
    let scenario = make_scenario(&cfg.scenario_config(), seed)?;
    let n = scenario.sensors.len();
    let horizon = scenario.horizon;
    let options = EcoOptions { certify: cfg.certify };

    let mut truth_rng = stream(seed, Stream::Truth);
    let mut meas_rng = stream(seed, Stream::Measurement);
    let mut init_rng = stream(seed, Stream::Init);
    let priors: Vec<GaussianBelief> = (0..n)
        .map(|_| GaussianBelief::prior(&scenario.initial_truth, &mut init_rng))
        .collect::<Result<_>>()?;
    let ckf_prior = GaussianBelief::prior(&scenario.initial_truth, &mut init_rng)?;

    let mut runners: Vec<Runner> = cfg
        .estimators
        .iter()
        .map(|&est| -> Result<Runner> {
            let trace = EstimatorTrace::new(est, horizon);
            Ok(match est {
                Estimator::EcoDkf | Estimator::AtaEcoDkf => {
                    let (topology, offset) = if est == Estimator::AtaEcoDkf {
                        (Topology::complete(n)?, ATA_STREAM_OFFSET)
                    } else {
                        (scenario.topology.clone(), 0)
                    };
                    Runner::Eco(EcoRun {
                        trace,
                        topology,
                        nodes: priors.iter().enumerate().map(|(i, p)| NodeState::new(i, p.clone())).collect(),
                        trigger_rngs: (0..n).map(|i| stream(seed, Stream::Trigger(offset + i))).collect(),
                    })
                }
                Estimator::ConsensusDkf => Runner::Consensus(ConsensusRun {
                    trace,
                    beliefs: priors.clone(),
                }),
                Estimator::Ckf => Runner::Ckf(CkfRun {
                    trace,
                    belief: ckf_prior.clone(),
                }),
            })
        })
        .collect::<Result<_>>()?;

    let mut x = scenario.initial_truth.clone();
    let mut truth = Vec::with_capacity(horizon);
    for k in 0..horizon {
        x = step_truth(&scenario.system, &x, &mut truth_rng)?;
        let zs: Vec<Vec<f64>> = scenario
            .sensors
            .iter()
            .map(|s| measure(s, &x, &mut meas_rng))
            .collect::<Result<_>>()?;
        for runner in &mut runners {
            match runner {
                Runner::Eco(run) => run.step(&scenario, &rule, &zs, &x, k, options)?,
                Runner::Consensus(run) => run.step(&scenario, &zs, &x, k)?,
                Runner::Ckf(run) => {
                    run.belief = ckf_step(&run.belief, &scenario.system, &scenario.sensors, &zs)
                        .map_err(|e| Error::invalid(format!("CKF at step {k}: {e}")))?;
                    run.trace.sq_err.push(vec![run.belief.squared_error(&x)]);
                    run.trace.nees.push(vec![run.belief.nees(&x)?]);
                }
            }
        }
        truth.push(x.clone());
    }

    Ok(TrialRecord {
        trial,
        seed,
        rule,
        nodes: n,
        truth,
        traces: runners
            .into_iter()
            .map(|r| match r {
                Runner::Eco(run) => run.trace,
                Runner::Consensus(run) => run.trace,
                Runner::Ckf(run) => run.trace,
            })
            .collect(),
    })
}
