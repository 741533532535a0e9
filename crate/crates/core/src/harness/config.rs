use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netsim::Connectivity;
use crate::sysmodel::{Axis, ExperimentKind, ScenarioConfig};
use crate::triggers::TriggerRule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Estimator {
    #[serde(rename = "ECO-DKF")]
    EcoDkf,
    /// ECO-DKF on a complete graph.
    #[serde(rename = "AtA-ECO-DKF")]
    AtaEcoDkf,
    #[serde(rename = "CKF")]
    Ckf,
    #[serde(rename = "ConsensusDKF")]
    ConsensusDkf,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [
        Estimator::EcoDkf,
        Estimator::AtaEcoDkf,
        Estimator::Ckf,
        Estimator::ConsensusDkf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::EcoDkf => "ECO-DKF",
            Estimator::AtaEcoDkf => "AtA-ECO-DKF",
            Estimator::Ckf => "CKF",
            Estimator::ConsensusDkf => "ConsensusDKF",
        }
    }

    /// Whether broadcasts follow the configured trigger rule.
    pub fn is_event_triggered(self) -> bool {
        matches!(self, Estimator::EcoDkf | Estimator::AtaEcoDkf)
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown estimator '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub nodes: usize,
    /// 1 or 2.
    pub experiment: u8,
    /// Target mean degree of the base graph.
    pub degree: f64,
    /// Fixed communication radius; overrides `degree`.
    pub radius: Option<f64>,
    pub complete_graph: bool,
    pub horizon: usize,
    pub sample_time: f64,
    pub orbit_period: f64,
    pub process_noise: f64,
    pub initial_truth: Vec<f64>,
    pub axes: Option<Vec<Axis>>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let d = ScenarioConfig::default();
        ScenarioSection {
            nodes: d.nodes,
            experiment: 1,
            degree: 4.0,
            radius: None,
            complete_graph: false,
            horizon: d.horizon,
            sample_time: d.sample_time,
            orbit_period: d.orbit_period,
            process_noise: d.process_noise,
            initial_truth: d.initial_truth,
            axes: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TriggerSection {
    /// `O`, `C`, `D`, `S` or `J`.
    pub rule: String,
    pub alpha: f64,
    pub beta: f64,
    pub n_bb: u32,
    pub tau: f64,
}

impl Default for TriggerSection {
    fn default() -> Self {
        TriggerSection {
            rule: "O".into(),
            alpha: 5.0,
            beta: 1.0,
            n_bb: 10,
            tau: 100.0,
        }
    }
}

impl TriggerSection {
    /// The rule named by `label`, with this section's parameters.
    pub fn rule_for(&self, label: &str) -> Result<TriggerRule> {
        let rule = match label.parse::<TriggerRule>()? {
            TriggerRule::Stochastic { .. } => TriggerRule::Stochastic {
                alpha: self.alpha,
                beta: self.beta,
                n_bb: self.n_bb,
            },
            TriggerRule::JensenShannon { .. } => TriggerRule::JensenShannon { tau: self.tau },
            other => other,
        };
        rule.validate()?;
        Ok(rule)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub trials: usize,
    pub estimators: Vec<Estimator>,
    /// Solve the certificate relaxation at every fusion.
    pub certify: bool,
    pub output_dir: Option<PathBuf>,
    pub scenario: ScenarioSection,
    pub trigger: TriggerSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            master_seed: 2024,
            trials: 20,
            estimators: vec![Estimator::EcoDkf, Estimator::Ckf],
            certify: true,
            output_dir: None,
            scenario: ScenarioSection::default(),
            trigger: TriggerSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.scenario.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.scenario.nodes < 2 {
            return bad("a network needs at least 2 nodes".into());
        }
        if !matches!(self.scenario.experiment, 1 | 2) {
            return bad(format!("experiment must be 1 or 2, got {}", self.scenario.experiment));
        }
        if self.estimators.is_empty() {
            return bad("at least one estimator is required".into());
        }
        let mut seen = self.estimators.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.estimators.len() {
            return bad("estimators are listed twice".into());
        }
        if self.scenario.radius.is_none() && !(self.scenario.degree > 0.0) {
            return bad("degree must be positive".into());
        }
        self.trigger_rule().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn trigger_rule(&self) -> Result<TriggerRule> {
        self.trigger.rule_for(&self.trigger.rule)
    }

    pub fn scenario_config(&self) -> ScenarioConfig {
        let s = &self.scenario;
        ScenarioConfig {
            nodes: s.nodes,
            experiment: if s.experiment == 2 {
                ExperimentKind::Two
            } else {
                ExperimentKind::One
            },
            connectivity: match s.radius {
                Some(r) => Connectivity::Radius(r),
                None => Connectivity::MeanDegree(s.degree),
            },
            horizon: s.horizon,
            sample_time: s.sample_time,
            orbit_period: s.orbit_period,
            process_noise: s.process_noise,
            initial_truth: s.initial_truth.clone(),
            axes: s.axes.clone(),
            complete_graph: s.complete_graph,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml_string();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn parses_partial_file() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            trials = 3
            estimators = ["ECO-DKF", "AtA-ECO-DKF", "ConsensusDKF"]
            [scenario]
            nodes = 5
            axes = ["x", "y", "both", "x", "y"]
            experiment = 2
            [trigger]
            rule = "S"
            alpha = 2.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.trials, 3);
        assert_eq!(cfg.scenario.nodes, 5);
        assert_eq!(cfg.estimators[1], Estimator::AtaEcoDkf);
        assert_eq!(
            cfg.trigger_rule().unwrap(),
            TriggerRule::Stochastic {
                alpha: 2.0,
                beta: 1.0,
                n_bb: 10
            }
        );
        assert_eq!(cfg.scenario_config().experiment, ExperimentKind::Two);
    }

    #[test]
    fn rejects_unknown_and_invalid_keys() {
        assert!(matches!(
            ExperimentConfig::from_toml_str("trails = 3"),
            Err(Error::Config(_))
        ));
        assert!(ExperimentConfig::from_toml_str("[scenario]\nnode = 3").is_err());
        assert!(ExperimentConfig::from_toml_str("trials = 0").is_err());
        assert!(ExperimentConfig::from_toml_str("[trigger]\nrule = \"Q\"").is_err());
        assert!(ExperimentConfig::from_toml_str("[trigger]\nrule = \"J\"\ntau = -1.0").is_err());
        assert!(ExperimentConfig::from_toml_str("estimators = [\"CKF\", \"CKF\"]").is_err());
        assert!(ExperimentConfig::from_toml_str("[scenario]\nexperiment = 3").is_err());
    }

    #[test]
    fn estimator_names_parse() {
        for e in Estimator::ALL {
            assert_eq!(e.name().parse::<Estimator>().unwrap(), e);
        }
        assert!("KF".parse::<Estimator>().is_err());
    }
}
