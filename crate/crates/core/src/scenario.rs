//! Versioned scenario documents that drive every experiment.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controllers::ControllerSpec;
use crate::governance::{GlobalUtilitySpec, JointSpace, Strategy, TriggerPolicy, DEFAULT_EXHAUSTIVE_BUDGET};
use crate::lab::{
    lambda_grid, CalibrationMetric, CoupledScenario, NetworkSetup, SweepConfig, DEFAULT_TRANSITION_THRESHOLD,
};
use crate::net::{RoutingPolicy, Topology, TopologySpec, TrafficSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("malformed JSON: {0}")]
    Syntax(String),
    #[error("unsupported schema_version {found:?}; expected {expected}")]
    Version { found: Option<serde_json::Value>, expected: u32 },
    #[error("at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// λ values either as an evenly spaced grid or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaAxis {
    Grid { start: f64, stop: f64, step: f64 },
    List(Vec<f64>),
}

impl LambdaAxis {
    pub fn values(&self) -> Vec<f64> {
        match self {
            LambdaAxis::Grid { start, stop, step } => lambda_grid(*start, *stop, *step),
            LambdaAxis::List(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    PhaseSweep {
        lambda: LambdaAxis,
        #[serde(default)]
        measure_ticks: Option<u64>,
        #[serde(default = "default_threshold")]
        threshold: f64,
    },
    Hysteresis {
        lambda: LambdaAxis,
        #[serde(default)]
        measure_ticks: Option<u64>,
    },
    Govern,
    Coupled {
        #[serde(default)]
        scenario: CoupledScenario,
    },
    Pareto {
        /// Controller ids used as objectives; all controllers when empty.
        #[serde(default)]
        objectives: Vec<String>,
        #[serde(default = "default_budget")]
        budget: u64,
    },
    Calibrate {
        controller: String,
        metric: CalibrationMetric,
    },
}

fn default_threshold() -> f64 {
    DEFAULT_TRANSITION_THRESHOLD
}
fn default_budget() -> u64 {
    DEFAULT_EXHAUSTIVE_BUDGET
}
fn default_service_rate() -> u32 {
    1
}
fn default_routing() -> RoutingPolicy {
    RoutingPolicy::static_shortest_path()
}
fn default_horizon() -> u64 {
    5000
}
fn default_seeds() -> Vec<u64> {
    vec![1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub topology: Option<TopologySpec>,
    #[serde(default)]
    pub traffic: Option<TrafficSpec>,
    #[serde(default = "default_service_rate")]
    pub service_rate: u32,
    #[serde(default = "default_routing")]
    pub routing: RoutingPolicy,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub controllers: Vec<ControllerSpec>,
    #[serde(default)]
    pub global_utility: Option<GlobalUtilitySpec>,
    #[serde(default)]
    pub trigger: Option<TriggerPolicy>,
    #[serde(default)]
    pub experiment: Option<Experiment>,
}

impl Scenario {
    /// Parses and validates a scenario document. Errors carry the line,
    /// column and field path of the offending input.
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| ScenarioError::Syntax(e.to_string()))?;
        let version = raw.get("schema_version");
        if version.and_then(serde_json::Value::as_u64) != Some(u64::from(SCHEMA_VERSION)) {
            return Err(ScenarioError::Version { found: version.cloned(), expected: SCHEMA_VERSION });
        }
        let mut de = serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(&mut de)
            .map_err(|e| ScenarioError::Schema { path: e.path().to_string(), message: e.into_inner().to_string() })?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// SHA-256 of the canonical JSON form (sorted keys, defaults filled in).
    pub fn hash(&self) -> String {
        crate::report::content_hash(self)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| ScenarioError::Invalid(m);
        if self.seeds.is_empty() {
            return Err(invalid("at least one seed is required".into()));
        }
        if self.horizon == 0 {
            return Err(invalid("horizon must be at least 1 tick".into()));
        }
        if self.service_rate == 0 {
            return Err(invalid("service_rate must be at least 1".into()));
        }
        if let Some(topology) = &self.topology {
            Topology::build(topology).map_err(|e| invalid(e.to_string()))?;
            if let Some(traffic) = &self.traffic {
                traffic.validate(topology.nodes()).map_err(|e| invalid(e.to_string()))?;
            }
        }
        if !self.controllers.is_empty() {
            let space = JointSpace::new(&self.controllers).map_err(|e| invalid(e.to_string()))?;
            if let Some(g) = &self.global_utility {
                g.validate(space.controllers().iter().map(|c| c.id.as_str())).map_err(|e| invalid(e.to_string()))?;
            }
        }
        if let Some(trigger) = &self.trigger {
            trigger.validate().map_err(|e| invalid(e.to_string()))?;
        }
        match &self.experiment {
            Some(Experiment::PhaseSweep { .. } | Experiment::Hysteresis { .. }) => {
                self.sweep_config()
                    .map_err(|e| invalid(e.to_string()))?
                    .validate()
                    .map_err(|e| invalid(e.to_string()))?;
            }
            Some(Experiment::Coupled { scenario }) => {
                scenario.validate().map_err(|e| invalid(e.to_string()))?;
                if self.horizon < scenario.window as u64 {
                    return Err(invalid(format!(
                        "horizon {} is shorter than the coupled report window {}",
                        self.horizon, scenario.window
                    )));
                }
            }
            Some(Experiment::Pareto { objectives, .. }) => {
                if self.controllers.is_empty() {
                    return Err(invalid("pareto experiment needs controllers".into()));
                }
                if let Some(o) = objectives.iter().find(|o| !self.controllers.iter().any(|c| &c.id == *o)) {
                    return Err(invalid(format!("objective {o} is not a controller id")));
                }
            }
            Some(Experiment::Calibrate { controller, .. }) => {
                self.network().map_err(|e| invalid(e.to_string()))?;
                let spec = self
                    .controllers
                    .iter()
                    .find(|c| &c.id == controller)
                    .ok_or_else(|| invalid(format!("calibrated controller {controller} is not defined")))?;
                if !spec.actuates() {
                    return Err(invalid(format!("controller {controller} does not act on the network")));
                }
            }
            Some(Experiment::Govern) | None => {}
        }
        Ok(())
    }

    /// The network part of the scenario; requires a topology.
    pub fn network(&self) -> Result<NetworkSetup, ScenarioError> {
        let topology =
            self.topology.clone().ok_or_else(|| ScenarioError::Invalid("scenario has no topology".into()))?;
        Ok(NetworkSetup {
            topology,
            service_rate: self.service_rate,
            traffic: self.traffic.clone().unwrap_or_else(|| TrafficSpec::uniform(0.0)),
            routing: self.routing,
        })
    }

    pub fn sweep_config(&self) -> Result<SweepConfig, ScenarioError> {
        let (lambda, measure_ticks) = match &self.experiment {
            Some(
                Experiment::PhaseSweep { lambda, measure_ticks, .. } | Experiment::Hysteresis { lambda, measure_ticks },
            ) => (lambda, *measure_ticks),
            _ => return Err(ScenarioError::Invalid("experiment is not a sweep".into())),
        };
        Ok(SweepConfig {
            setup: self.network()?,
            lambdas: lambda.values(),
            seeds: self.seeds.clone(),
            horizon: self.horizon,
            measure_ticks,
        })
    }

    pub fn global_utility(&self) -> GlobalUtilitySpec {
        self.global_utility.clone().unwrap_or_else(GlobalUtilitySpec::weighted_sum)
    }

    /// Trigger policy, defaulting to a single trigger at tick 0.
    pub fn trigger_policy(&self) -> TriggerPolicy {
        self.trigger
            .clone()
            .unwrap_or_else(|| TriggerPolicy { strategy: Strategy::Auto, ..TriggerPolicy::periodic(self.horizon) })
    }

    pub fn with_seeds(mut self, seeds: Vec<u64>) -> Result<Self, ScenarioError> {
        self.seeds = seeds;
        self.validate()?;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SWEEP: &str = r#"{
        "schema_version": 1,
        "topology": {"kind": "ring", "nodes": 16},
        "traffic": {"lambda": 0.1},
        "horizon": 400,
        "seeds": [1, 2],
        "experiment": {"kind": "phase_sweep", "lambda": {"start": 0.05, "stop": 0.3, "step": 0.05}}
    }"#;

    #[test]
    fn parses_and_hashes_stably() {
        let s = Scenario::from_json(SWEEP).unwrap();
        assert_eq!(s.sweep_config().unwrap().lambdas.len(), 6);
        let reordered = r#"{"seeds": [1, 2], "horizon": 400, "schema_version": 1,
            "experiment": {"lambda": {"step": 0.05, "stop": 0.3, "start": 0.05}, "kind": "phase_sweep"},
            "traffic": {"lambda": 0.1}, "topology": {"nodes": 16, "kind": "ring"}}"#;
        assert_eq!(s.hash(), Scenario::from_json(reordered).unwrap().hash());
        assert_eq!(s.hash().len(), 64);
        let other = Scenario::from_json(&SWEEP.replace("400", "500")).unwrap();
        assert_ne!(s.hash(), other.hash());
    }

    #[test]
    fn rejects_unknown_fields_with_path() {
        let bad = SWEEP.replace("\"nodes\": 16", "\"nodes\": 16, \"colour\": 3");
        match Scenario::from_json(&bad) {
            Err(ScenarioError::Schema { path, .. }) => assert_eq!(path, "topology"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn version_and_syntax() {
        assert!(matches!(Scenario::from_json("{"), Err(ScenarioError::Syntax(_))));
        assert!(matches!(Scenario::from_json(r#"{"schema_version": 2}"#), Err(ScenarioError::Version { .. })));
        assert!(matches!(Scenario::from_json(r#"{"horizon": 3}"#), Err(ScenarioError::Version { .. })));
    }

    #[test]
    fn sweep_with_one_seed_is_invalid() {
        let bad = SWEEP.replace("[1, 2]", "[1]");
        assert!(matches!(Scenario::from_json(&bad), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn budgets_parse_inside_tagged_objects() {
        let s = Scenario::from_json(
            r#"{"schema_version": 1, "horizon": 100,
                "controllers": [{"id": "tp", "kind": "throughput", "resources": [1, 2]}],
                "trigger": {"period": 50, "strategy": {"kind": "exhaustive", "budget": 4}},
                "experiment": {"kind": "pareto", "budget": 7}}"#,
        )
        .unwrap();
        assert_eq!(s.trigger.unwrap().strategy, Strategy::Exhaustive { budget: 4 });
        assert!(matches!(s.experiment, Some(Experiment::Pareto { budget: 7, .. })));
    }

    #[test]
    fn coupled_defaults() {
        let s = Scenario::from_json(r#"{"schema_version": 1, "horizon": 2000, "experiment": {"kind": "coupled"}}"#)
            .unwrap();
        assert!(
            matches!(s.experiment, Some(Experiment::Coupled { ref scenario }) if *scenario == CoupledScenario::default())
        );
    }
}
