//! Functional controllers.
//!
//! A controller couples a monitor (trace → [`Metrics`]), a [`PerformanceModel`]
//! and a utility evaluator over a finite, ordered configuration space. Five
//! kinds exist; admission and routing controllers actuate the simulated
//! network, the others are evaluative only.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::net::{RoutingPolicy, SimulationTrace};
use crate::num::{self, NumError, RateProblem, SolverOptions, UtilitySpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("invalid controller: {0}")]
    Invalid(String),
    #[error("configuration {config} is not in the space of controller {controller}")]
    OutsideSpace { controller: String, config: String },
    #[error("empirical model has no entry for configuration {0}")]
    UnknownConfiguration(String),
    #[error("embedded rate solver failed: {0}")]
    Num(#[from] NumError),
}

/// Monitor output: per-tick averages over a window of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub window_start: u64,
    pub window_len: u64,
    /// Packets delivered per tick.
    pub delivered_rate: f64,
    /// Mean delay (ticks) of packets delivered in the window.
    pub mean_delay: f64,
    pub mean_queue_total: f64,
    /// Injection attempts per tick, admitted or not.
    pub offered_load: f64,
    /// Delivered rate over total service capacity `nodes · μ`.
    pub utilization: f64,
}

/// Averages a window of trace records.
pub fn monitor(trace: &SimulationTrace, window: Range<usize>) -> Result<Metrics, ControllerError> {
    if window.start >= window.end || window.end > trace.len() {
        return Err(ControllerError::Invalid(format!(
            "monitor window {window:?} is empty or exceeds the trace ({} records)",
            trace.len()
        )));
    }
    let len = window.len() as f64;
    let start = trace.before(window.start);
    let end = trace.records[window.end - 1];
    let records = &trace.records[window.clone()];
    let delivered = (end.delivered - start.delivered) as f64;
    let delay_sum: u64 = records.iter().map(|r| r.delay_sum_now).sum();
    let queue_sum: u64 = records.iter().map(|r| r.queue_total).sum();
    let offered = ((end.created + end.blocked) - (start.created + start.blocked)) as f64;
    let capacity = trace.nodes as f64 * f64::from(trace.service_rate);
    let delivered_rate = delivered / len;
    Ok(Metrics {
        window_start: records[0].tick,
        window_len: window.len() as u64,
        delivered_rate,
        mean_delay: if delivered > 0.0 { delay_sum as f64 / delivered } else { 0.0 },
        mean_queue_total: queue_sum as f64 / len,
        offered_load: offered / len,
        utilization: if capacity > 0.0 { delivered_rate / capacity } else { 0.0 },
    })
}

/// A named parameter assignment. Keys are kept sorted, so the JSON form is canonical.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration(BTreeMap<String, Value>);

impl Configuration {
    pub fn new() -> Self {
        Configuration(BTreeMap::new())
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.0.insert(key.to_owned(), value.into());
        self
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.0.get(key)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Canonical string form, used as a table key and for tie-breaking.
    pub fn key(&self) -> String {
        serde_json::to_string(&self.0).expect("configuration values are plain JSON")
    }

    fn u32_param(&self, key: &str) -> Result<u32, ControllerError> {
        self.get(key)
            .and_then(Value::as_u64)
            .and_then(|v| u32::try_from(v).ok())
            .ok_or_else(|| ControllerError::Invalid(format!("configuration {} lacks integer `{key}`", self.key())))
    }

    fn f64_param(&self, key: &str) -> Result<f64, ControllerError> {
        self.get(key)
            .and_then(Value::as_f64)
            .ok_or_else(|| ControllerError::Invalid(format!("configuration {} lacks number `{key}`", self.key())))
    }

    /// Resource units `n` (throughput and cost controllers).
    pub fn resources(&self) -> Result<u32, ControllerError> {
        self.u32_param("n")
    }
}

/// How a metric is predicted from a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerformanceModel {
    /// `T(n) = t_max · (1 − e^(−β n))`
    SaturatingThroughput { t_max: f64, beta: f64 },
    /// `C(n) = c_fixed + c_unit · n`
    LinearCost { c_fixed: f64, c_unit: f64 },
    /// Measured values keyed by canonical configuration string.
    Empirical { metric: String, table: BTreeMap<String, f64> },
}

impl PerformanceModel {
    pub fn default_throughput() -> Self {
        PerformanceModel::SaturatingThroughput { t_max: 100.0, beta: 0.15 }
    }

    pub fn default_cost() -> Self {
        PerformanceModel::LinearCost { c_fixed: 0.0, c_unit: 2.0 }
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        match *self {
            PerformanceModel::SaturatingThroughput { t_max, beta } if !(t_max > 0.0 && beta > 0.0) => Err(
                ControllerError::Invalid(format!("throughput model needs t_max > 0 and beta > 0, got {t_max}, {beta}")),
            ),
            PerformanceModel::LinearCost { c_fixed, c_unit } if !(c_fixed.is_finite() && c_unit >= 0.0) => {
                Err(ControllerError::Invalid(format!("cost model needs c_unit ≥ 0, got {c_unit}")))
            }
            PerformanceModel::Empirical { ref table, .. } if table.values().any(|v| !v.is_finite()) => {
                Err(ControllerError::Invalid("empirical table holds a non-finite value".into()))
            }
            _ => Ok(()),
        }
    }

    /// Units of the predicted metric.
    pub fn metric(&self) -> &str {
        match self {
            PerformanceModel::SaturatingThroughput { .. } => "throughput",
            PerformanceModel::LinearCost { .. } => "cost",
            PerformanceModel::Empirical { metric, .. } => metric,
        }
    }
}

/// Evaluates a performance model. The analytic forms depend on the resource
/// count alone; `load` is accepted for models that key on it but unused by them.
pub fn predict(model: &PerformanceModel, config: &Configuration, _load: f64) -> Result<f64, ControllerError> {
    match *model {
        PerformanceModel::SaturatingThroughput { t_max, beta } => {
            let n = f64::from(config.resources()?);
            Ok(t_max * (1.0 - (-beta * n).exp()))
        }
        PerformanceModel::LinearCost { c_fixed, c_unit } => {
            let n = f64::from(config.resources()?);
            Ok(c_fixed + c_unit * n)
        }
        PerformanceModel::Empirical { ref table, .. } => {
            let key = config.key();
            table.get(&key).copied().ok_or(ControllerError::UnknownConfiguration(key))
        }
    }
}

/// Resource grid: either an inclusive range or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResourceGrid {
    Range { min: u32, max: u32 },
    List(Vec<u32>),
}

impl ResourceGrid {
    /// Ascending, duplicate-free values.
    pub fn values(&self) -> Vec<u32> {
        let mut v: Vec<u32> = match self {
            ResourceGrid::Range { min, max } => (*min..=*max).collect(),
            ResourceGrid::List(list) => list.clone(),
        };
        v.sort_unstable();
        v.dedup();
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControllerKind {
    Throughput {
        #[serde(default)]
        resources: Option<ResourceGrid>,
        #[serde(default = "PerformanceModel::default_throughput")]
        model: PerformanceModel,
    },
    Cost {
        #[serde(default)]
        resources: Option<ResourceGrid>,
        #[serde(default = "PerformanceModel::default_cost")]
        model: PerformanceModel,
    },
    /// Embeds a rate allocation problem; configurations pick the fairness
    /// exponent α and the solver step size.
    Congestion {
        problem: RateProblem,
        alphas: Vec<f64>,
        step_sizes: Vec<f64>,
        #[serde(default)]
        solver: SolverOptions,
    },
    /// Configurations are per-node queue limits for new packets (`null` admits all).
    Admission {
        thresholds: Vec<Option<usize>>,
        #[serde(default = "default_admission_penalty")]
        penalty: f64,
    },
    Routing {
        policies: Vec<RoutingPolicy>,
    },
}

pub fn default_admission_penalty() -> f64 {
    0.01
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindTag {
    Throughput,
    Cost,
    Congestion,
    Admission,
    Routing,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControllerSpec {
    pub id: String,
    #[serde(flatten)]
    pub kind: ControllerKind,
    /// Evaluate on another controller's configuration instead of owning knobs
    /// (e.g. a cost controller priced on the throughput controller's `n`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shares: Option<String>,
}

// `flatten` cannot be combined with `deny_unknown_fields`, so peel off the
// shared fields by hand and let the strict kind enum see the rest.
impl<'de> Deserialize<'de> for ControllerSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let mut map = serde_json::Map::deserialize(deserializer)?;
        let id = match map.remove("id") {
            Some(Value::String(id)) => id,
            Some(_) => return Err(D::Error::custom("controller `id` must be a string")),
            None => return Err(D::Error::missing_field("id")),
        };
        let shares = match map.remove("shares") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s),
            Some(_) => return Err(D::Error::custom("controller `shares` must be a string")),
        };
        let kind = ControllerKind::deserialize(Value::Object(map))
            .map_err(|e| D::Error::custom(format!("controller {id}: {e}")))?;
        Ok(ControllerSpec { id, kind, shares })
    }
}

/// What applying a configuration changes in the simulated network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Actuation {
    Admission(Option<usize>),
    Routing(RoutingPolicy),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityValue {
    pub controller: String,
    pub value: f64,
    pub configuration: Configuration,
}

impl ControllerSpec {
    pub fn throughput(id: &str, resources: ResourceGrid, model: PerformanceModel) -> Self {
        ControllerSpec {
            id: id.into(),
            kind: ControllerKind::Throughput { resources: Some(resources), model },
            shares: None,
        }
    }

    pub fn cost(id: &str, resources: ResourceGrid, model: PerformanceModel) -> Self {
        ControllerSpec { id: id.into(), kind: ControllerKind::Cost { resources: Some(resources), model }, shares: None }
    }

    /// A cost controller without knobs that prices `owner`'s resource choice.
    pub fn shared_cost(id: &str, owner: &str, model: PerformanceModel) -> Self {
        ControllerSpec {
            id: id.into(),
            kind: ControllerKind::Cost { resources: None, model },
            shares: Some(owner.into()),
        }
    }

    pub fn admission(id: &str, thresholds: Vec<Option<usize>>, penalty: f64) -> Self {
        ControllerSpec { id: id.into(), kind: ControllerKind::Admission { thresholds, penalty }, shares: None }
    }

    pub fn routing(id: &str, policies: Vec<RoutingPolicy>) -> Self {
        ControllerSpec { id: id.into(), kind: ControllerKind::Routing { policies }, shares: None }
    }

    pub fn tag(&self) -> KindTag {
        match self.kind {
            ControllerKind::Throughput { .. } => KindTag::Throughput,
            ControllerKind::Cost { .. } => KindTag::Cost,
            ControllerKind::Congestion { .. } => KindTag::Congestion,
            ControllerKind::Admission { .. } => KindTag::Admission,
            ControllerKind::Routing { .. } => KindTag::Routing,
        }
    }

    /// Whether configurations of this controller change the simulated network.
    pub fn actuates(&self) -> bool {
        self.shares.is_none() && matches!(self.kind, ControllerKind::Admission { .. } | ControllerKind::Routing { .. })
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        if self.id.is_empty() {
            return Err(ControllerError::Invalid("controller id must not be empty".into()));
        }
        let invalid = |msg: String| Err(ControllerError::Invalid(format!("controller {}: {msg}", self.id)));
        if self.shares.is_some()
            && !matches!(self.kind, ControllerKind::Throughput { .. } | ControllerKind::Cost { .. })
        {
            return invalid("only throughput and cost controllers can share a configuration".into());
        }
        match &self.kind {
            ControllerKind::Throughput { resources, model } | ControllerKind::Cost { resources, model } => {
                model.validate()?;
                match (resources, &self.shares) {
                    (None, None) => return invalid("needs a resource grid or a `shares` target".into()),
                    (Some(_), Some(_)) => return invalid("cannot both own a resource grid and share one".into()),
                    (Some(grid), None) if grid.values().is_empty() => return invalid("resource grid is empty".into()),
                    _ => {}
                }
            }
            ControllerKind::Congestion { problem, alphas, step_sizes, .. } => {
                problem.validate()?;
                if alphas.is_empty() || step_sizes.is_empty() {
                    return invalid("needs at least one alpha and one step size".into());
                }
                if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
                    return invalid(format!("alpha must be positive, got {a}"));
                }
                if let Some(g) = step_sizes.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
                    return invalid(format!("step size must be positive, got {g}"));
                }
            }
            ControllerKind::Admission { thresholds, penalty } => {
                if thresholds.is_empty() {
                    return invalid("needs at least one threshold".into());
                }
                if !(*penalty >= 0.0 && penalty.is_finite()) {
                    return invalid(format!("penalty must be non-negative, got {penalty}"));
                }
            }
            ControllerKind::Routing { policies } => {
                if policies.is_empty() {
                    return invalid("needs at least one routing policy".into());
                }
            }
        }
        Ok(())
    }

    /// Applies a configuration of this controller to the network, if it actuates.
    pub fn actuation(&self, config: &Configuration) -> Result<Option<Actuation>, ControllerError> {
        if !self.actuates() {
            return Ok(None);
        }
        self.check_member(config)?;
        Ok(match &self.kind {
            ControllerKind::Admission { .. } => {
                let limit = config.get("threshold").and_then(Value::as_u64).map(|v| v as usize);
                Some(Actuation::Admission(limit))
            }
            ControllerKind::Routing { .. } => {
                let policy = serde_json::from_value(Value::Object(
                    config.0.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
                ))
                .map_err(|e| ControllerError::Invalid(format!("bad routing configuration: {e}")))?;
                Some(Actuation::Routing(policy))
            }
            _ => None,
        })
    }

    fn check_member(&self, config: &Configuration) -> Result<(), ControllerError> {
        if config_space(self).iter().any(|c| c == config) {
            Ok(())
        } else {
            Err(ControllerError::OutsideSpace { controller: self.id.clone(), config: config.key() })
        }
    }
}

/// The controller's configurations in their canonical order.
///
/// Controllers that share another's configuration own a single empty configuration.
pub fn config_space(spec: &ControllerSpec) -> Vec<Configuration> {
    if spec.shares.is_some() {
        return vec![Configuration::new()];
    }
    let mut space: Vec<Configuration> = match &spec.kind {
        ControllerKind::Throughput { resources, .. } | ControllerKind::Cost { resources, .. } => resources
            .as_ref()
            .map(|g| g.values().into_iter().map(|n| Configuration::new().with("n", n)).collect())
            .unwrap_or_default(),
        ControllerKind::Congestion { alphas, step_sizes, .. } => alphas
            .iter()
            .flat_map(|&a| step_sizes.iter().map(move |&g| Configuration::new().with("alpha", a).with("step_size", g)))
            .collect(),
        ControllerKind::Admission { thresholds, .. } => thresholds
            .iter()
            .map(|t| Configuration::new().with("threshold", t.map_or(Value::Null, |t| Value::from(t as u64))))
            .collect(),
        ControllerKind::Routing { policies } => policies
            .iter()
            .map(|p| Configuration::new().with("kind", p.kind.as_str()).with("queue_weight", p.queue_weight))
            .collect(),
    };
    let mut seen = std::collections::BTreeSet::new();
    space.retain(|c| seen.insert(c.key()));
    space
}

/// Rate problem as solved under a congestion configuration: every source's
/// utility becomes α-fair with its original weight.
pub fn congestion_problem(problem: &RateProblem, alpha: f64) -> RateProblem {
    RateProblem {
        utilities: problem.utilities.iter().map(|u| UtilitySpec::alpha_fair(u.weight(), alpha).normalized()).collect(),
        ..problem.clone()
    }
}

/// Σ U_s(x_s) at the converged allocation, optionally warm-started from prices.
pub fn congestion_utility(
    problem: &RateProblem,
    solver: &SolverOptions,
    config: &Configuration,
    warm_prices: Option<&[f64]>,
) -> Result<(f64, Vec<f64>), ControllerError> {
    let alpha = config.f64_param("alpha")?;
    let step = config.f64_param("step_size")?;
    let tuned = congestion_problem(problem, alpha);
    let options = SolverOptions { step_size: Some(step), ..*solver };
    let solution = match warm_prices {
        Some(p) => num::solve_num_from(&tuned, &options, p)?,
        None => num::solve_num(&tuned, &options)?,
    };
    let value = tuned.objective(&solution.rates)?;
    Ok((value, solution.prices))
}

/// Utility of `config` given the monitored metrics.
///
/// For a controller that shares another's configuration, `config` is the
/// owner's configuration.
pub fn evaluate_utility(
    spec: &ControllerSpec,
    metrics: &Metrics,
    config: &Configuration,
) -> Result<UtilityValue, ControllerError> {
    if spec.shares.is_none() {
        spec.check_member(config)?;
    }
    let value = match &spec.kind {
        ControllerKind::Throughput { model, .. } => predict(model, config, metrics.offered_load)?,
        ControllerKind::Cost { model, .. } => -predict(model, config, metrics.offered_load)?,
        ControllerKind::Congestion { problem, solver, .. } => congestion_utility(problem, solver, config, None)?.0,
        ControllerKind::Admission { penalty, .. } => metrics.delivered_rate - penalty * metrics.mean_queue_total,
        ControllerKind::Routing { .. } => -metrics.mean_delay,
    };
    if !value.is_finite() {
        return Err(ControllerError::Invalid(format!("controller {} produced a non-finite utility", spec.id)));
    }
    Ok(UtilityValue { controller: spec.id.clone(), value, configuration: config.clone() })
}
