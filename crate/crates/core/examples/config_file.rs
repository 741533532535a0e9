//! Load the shipped configuration, adjust it, and show the resulting file.

use std::path::Path;

use eco_dkf::harness::ExperimentConfig;

pub fn run_example() -> eco_dkf::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    let mut cfg = ExperimentConfig::load(&path)?;
    cfg.trials = 100;
    cfg.trigger.rule = "S".into();
    cfg.trigger.n_bb = 15;
    cfg.validate()?;
    println!("rule {}", cfg.trigger_rule()?);
    print!("{}", cfg.to_toml_string());

    match ExperimentConfig::from_toml_str("[scenario]\nnode = 3\n") {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!("unknown keys are errors"),
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> eco_dkf::Result<()> {
    run_example()
}
