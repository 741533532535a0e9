//! Trade-off between broadcasts and accuracy across trigger rules.

use eco_dkf::harness::{run_sweep, Estimator, ExperimentConfig};

pub fn run_example() -> eco_dkf::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.trials = 3;
    cfg.scenario.horizon = 80;
    cfg.certify = false;
    let rules: Vec<String> = ["O", "C", "D", "S", "J"].map(String::from).to_vec();
    println!("rule  mean NoB (last 30)  final MSE");
    for run in run_sweep(&cfg, &rules, None)? {
        let eco = run.series.get(Estimator::EcoDkf).expect("configured");
        println!(
            "{:<5} {:>18.2}  {:.3e}",
            run.series.rule.to_string(),
            eco.mean_nob(30).unwrap_or(f64::NAN),
            eco.final_mse(20)
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> eco_dkf::Result<()> {
    run_example()
}
