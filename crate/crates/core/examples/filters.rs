//! One ECO-DKF network next to the centralized filter on a fixed scenario.
//!
//! Each instant runs in two phases: every node predicts and prepares its message,
//! then every node fuses what it received.

use eco_dkf::filter::{ckf_step, eco_dkf_complete, prepare, EcoOptions, GaussianBelief, NodeState};
use eco_dkf::netsim::deliver;
use eco_dkf::rng::{stream, Stream};
use eco_dkf::sysmodel::{make_scenario, measure, step_truth, ScenarioConfig};

pub fn run_example() -> eco_dkf::Result<()> {
    let cfg = ScenarioConfig {
        nodes: 8,
        horizon: 60,
        ..ScenarioConfig::default()
    };
    let sc = make_scenario(&cfg, 5)?;
    let (mut truth_rng, mut meas_rng, mut init_rng) =
        (stream(5, Stream::Truth), stream(5, Stream::Measurement), stream(5, Stream::Init));
    let mut nodes: Vec<NodeState> = (0..cfg.nodes)
        .map(|i| Ok(NodeState::new(i, GaussianBelief::prior(&sc.initial_truth, &mut init_rng)?)))
        .collect::<eco_dkf::Result<_>>()?;
    let mut central = GaussianBelief::prior(&sc.initial_truth, &mut init_rng)?;

    let mut x = sc.initial_truth.clone();
    for k in 0..cfg.horizon {
        x = step_truth(&sc.system, &x, &mut truth_rng)?;
        let zs: Vec<Vec<f64>> = sc
            .sensors
            .iter()
            .map(|s| measure(s, &x, &mut meas_rng))
            .collect::<eco_dkf::Result<_>>()?;
        central = ckf_step(&central, &sc.system, &sc.sensors, &zs)?;

        let round = deliver(&sc.topology, &vec![true; cfg.nodes], k)?;
        let prepared: Vec<_> = nodes
            .iter()
            .zip(&sc.sensors)
            .zip(&zs)
            .map(|((n, s), z)| prepare(&n.belief, &sc.system, s, z))
            .collect::<eco_dkf::Result<_>>()?;
        for (i, node) in nodes.iter_mut().enumerate() {
            let received: Vec<_> = round.inboxes[i].iter().map(|&j| &prepared[j].message).collect();
            eco_dkf_complete(node, &prepared[i], &received, true, k, EcoOptions { certify: false })?;
        }
        if k % 15 == 14 {
            let mse = nodes.iter().map(|n| n.belief.squared_error(&x)).sum::<f64>() / cfg.nodes as f64;
            println!("step {k:>2}: ECO-DKF mse {mse:.3e}, centralized {:.3e}", central.squared_error(&x));
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> eco_dkf::Result<()> {
    run_example()
}
