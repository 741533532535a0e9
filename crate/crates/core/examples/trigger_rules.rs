//! How the broadcast rules decide, from a node's previous-step state.

use eco_dkf::matkernel::SymMatrix;
use eco_dkf::rng::{stream, Stream};
use eco_dkf::triggers::{beta_binomial_p, decide, js_divergence, TriggerContext, TriggerRule};

pub fn run_example() -> eco_dkf::Result<()> {
    let p: Vec<String> = (0..=10)
        .map(|k| beta_binomial_p(5.0, 1.0, 10, k).map(|p| format!("{p:.4}")))
        .collect::<eco_dkf::Result<_>>()?;
    println!("#S broadcast probability after k silent steps: {}", p.join(" "));

    let a = SymMatrix::from_diag(&[2.0, 1.0]);
    let b = SymMatrix::from_diag(&[20.0, 1.0]);
    println!("divergence between fused matrices: {:.4}", js_divergence(&a, &b)?);

    let mut rng = stream(1, Stream::Trigger(0));
    let isolated = TriggerContext {
        lambda_self: 1.0,
        lambda_max: 1.0,
        had_neighbors_prev: false,
        k_l: 3,
        s_at_last_broadcast: Some(&a),
        s_current: Some(&b),
    };
    let outvoted = TriggerContext {
        lambda_self: 0.2,
        lambda_max: 0.6,
        had_neighbors_prev: true,
        ..isolated
    };
    for rule in [
        TriggerRule::TimeTriggered,
        TriggerRule::Connected,
        TriggerRule::Disconnected,
        TriggerRule::DEFAULT_STOCHASTIC,
        TriggerRule::JensenShannon { tau: 0.5 },
    ] {
        println!(
            "{rule}: isolated -> {}, outweighed by a neighbour -> {}",
            decide(&rule, &isolated, &mut rng)?,
            decide(&rule, &outvoted, &mut rng)?
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> eco_dkf::Result<()> {
    run_example()
}
