//! A small Monte-Carlo run written to CSV and SVG.

use eco_dkf::harness::{emit_outputs, run_experiment, Estimator, ExperimentConfig};

pub fn run_example() -> eco_dkf::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.trials = 4;
    cfg.scenario.nodes = 10;
    cfg.scenario.horizon = 40;
    cfg.estimators = Estimator::ALL.to_vec();
    let run = run_experiment(&cfg, None)?;
    for e in &run.series.estimators {
        println!(
            "{:<13} mse[0] {:.3e} -> final {:.3e}, NEES {:.2}",
            e.estimator.name(),
            e.mse[0],
            e.final_mse(10),
            e.mean_nees(20)
        );
    }
    let eco = run.series.get(Estimator::EcoDkf).expect("configured");
    println!("ECO-DKF certification rate {:.3}", eco.cert_rate(0).unwrap_or(f64::NAN));

    let dir = tempfile::tempdir().map_err(|e| eco_dkf::Error::Config(e.to_string()))?;
    for path in emit_outputs(&[run.series], &[run.records], dir.path())? {
        println!("wrote {}", path.file_name().unwrap().to_string_lossy());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> eco_dkf::Result<()> {
    run_example()
}
