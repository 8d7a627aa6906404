//! The network controller's reconfiguration loop over a running simulation.
//!
//! At every trigger the loop scores candidate configuration vectors by running
//! a short look-ahead on a clone of the live network with the candidate
//! applied, adopts the search result, and keeps simulating.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controllers::{
    congestion_utility, evaluate_utility, monitor, Actuation, Configuration, ControllerKind, ControllerSpec, Metrics,
    UtilityValue,
};
use crate::net::{NetError, NetworkState, RoutingPolicy, SimulationTrace, TrafficSpec};

use super::aggregate::{aggregate, GlobalUtilitySpec};
use super::search::{search, Evaluator, Strategy};
use super::space::{ConfigurationVector, JointSpace};
use super::GovError;

/// Actuating sub-spaces up to this size are simulated up front, in parallel.
const PREFETCH_LIMIT: u128 = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerPolicy {
    /// Ticks between periodic triggers (the first fires at tick 0).
    pub period: u64,
    /// Monitoring window for threshold checks; defaults to `period / 2`.
    #[serde(default)]
    pub window: Option<u64>,
    /// Length of the simulated look-ahead used to score a candidate.
    #[serde(default = "default_lookahead")]
    pub lookahead: u64,
    #[serde(default)]
    pub strategy: Strategy,
    /// Restart embedded solvers from scratch after a reconfiguration instead of
    /// warm-starting them from the previous configuration's state.
    #[serde(default)]
    pub reset_on_reconfigure: bool,
    /// Extra ticks at which an operator forces a trigger.
    #[serde(default)]
    pub manual: Vec<u64>,
}

fn default_lookahead() -> u64 {
    200
}

impl TriggerPolicy {
    pub fn periodic(period: u64) -> Self {
        TriggerPolicy {
            period,
            window: None,
            lookahead: default_lookahead(),
            strategy: Strategy::Auto,
            reset_on_reconfigure: false,
            manual: Vec::new(),
        }
    }

    pub fn monitoring_window(&self) -> u64 {
        self.window.unwrap_or(self.period / 2).max(1)
    }

    pub fn validate(&self) -> Result<(), GovError> {
        if self.period == 0 {
            return Err(GovError::Invalid("trigger period must be at least 1 tick".into()));
        }
        if self.lookahead == 0 {
            return Err(GovError::Invalid("look-ahead must be at least 1 tick".into()));
        }
        if self.window == Some(0) {
            return Err(GovError::Invalid("monitoring window must be at least 1 tick".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TriggerReason {
    Periodic,
    ThresholdBreach,
    Manual,
}

impl TriggerReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TriggerReason::Periodic => "periodic",
            TriggerReason::ThresholdBreach => "threshold-breach",
            TriggerReason::Manual => "manual",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GovernanceEntry {
    pub tick: u64,
    pub reason: TriggerReason,
    pub examined: usize,
    pub configuration: ConfigurationVector,
    pub global_utility: f64,
    /// Look-ahead score of the configuration in force when the trigger fired.
    pub incumbent_utility: f64,
    pub reconfigured: bool,
    /// The chosen configuration still scores below the threshold.
    pub threshold_unmet: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GovernanceTrace {
    pub entries: Vec<GovernanceEntry>,
}

/// The live network a governance loop drives.
#[derive(Debug, Clone)]
pub struct Plant {
    pub state: NetworkState,
    pub traffic: TrafficSpec,
    pub routing: RoutingPolicy,
}

#[derive(Debug, Clone)]
pub struct GovernedRun {
    pub governance: GovernanceTrace,
    pub trace: SimulationTrace,
    /// Measured global utility over the trailing monitoring window, per tick.
    pub utility_series: Vec<f64>,
    pub warnings: Vec<String>,
}

impl GovernedRun {
    /// Fraction of ticks whose measured global utility meets `threshold`.
    pub fn fraction_meeting(&self, threshold: Option<f64>) -> f64 {
        let Some(th) = threshold else { return 1.0 };
        if self.utility_series.is_empty() {
            return 1.0;
        }
        self.utility_series.iter().filter(|&&u| u >= th).count() as f64 / self.utility_series.len() as f64
    }
}

/// Deterministic per-trigger seed for look-ahead runs.
fn lookahead_seed(base: u64, tick: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base ^ tick.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn apply(state: &mut NetworkState, routing: &mut RoutingPolicy, actuation: Actuation) {
    match actuation {
        Actuation::Admission(limit) => state.set_admission_limit(limit),
        Actuation::Routing(policy) => *routing = policy,
    }
}

/// Canonical key of the actuating part of a configuration vector.
fn actuation_key(space: &JointSpace, vector: &ConfigurationVector) -> String {
    space
        .controllers()
        .iter()
        .filter(|c| c.actuates())
        .map(|c| format!("{}={}", c.id, vector.get(&c.id).map(Configuration::key).unwrap_or_default()))
        .collect::<Vec<_>>()
        .join(";")
}

fn actuations(space: &JointSpace, vector: &ConfigurationVector) -> Result<Vec<Actuation>, GovError> {
    let mut out = Vec::new();
    for c in space.controllers() {
        let cfg = vector.get(&c.id).expect("vector covers every controller");
        if let Some(a) = c.actuation(cfg)? {
            out.push(a);
        }
    }
    Ok(out)
}

/// Utilities of one vector given the metrics its actuation produced. Congestion
/// controllers are solved (or looked up) through `solve`.
fn utilities_for(
    space: &JointSpace,
    vector: &ConfigurationVector,
    metrics: &Metrics,
    mut solve: impl FnMut(&ControllerSpec, &Configuration) -> Result<f64, GovError>,
) -> Result<Vec<UtilityValue>, GovError> {
    space
        .controllers()
        .iter()
        .map(|c| {
            let own = vector.get(&c.id).cloned().unwrap_or_default();
            let cfg = space.effective(vector, &c.id).expect("vector covers every controller");
            let value = if matches!(c.kind, ControllerKind::Congestion { .. }) {
                UtilityValue { controller: c.id.clone(), value: solve(c, cfg)?, configuration: own }
            } else {
                let mut v = evaluate_utility(c, metrics, cfg)?;
                v.configuration = own;
                v
            };
            Ok(value)
        })
        .collect()
}

fn lookahead_metrics(
    plant: &Plant,
    actuation: &[Actuation],
    traffic: &TrafficSpec,
    seed: u64,
    ticks: u64,
) -> Result<Metrics, GovError> {
    let mut state = plant.state.clone();
    let mut routing = plant.routing;
    for &a in actuation {
        apply(&mut state, &mut routing, a);
    }
    state.reseed(seed);
    let trace = state.run(traffic, &routing, ticks)?;
    Ok(monitor(&trace, 0..trace.len())?)
}

/// Scores configuration vectors by simulating the network under each distinct
/// actuation for a fixed number of ticks from a fixed seed.
#[derive(Debug, Clone)]
pub struct MeasuredEvaluator {
    plant: Plant,
    seed: u64,
    ticks: u64,
    cache: HashMap<String, Metrics>,
}

impl MeasuredEvaluator {
    pub fn new(plant: Plant, seed: u64, ticks: u64) -> Self {
        MeasuredEvaluator { plant, seed, ticks: ticks.max(1), cache: HashMap::new() }
    }
}

impl Evaluator for MeasuredEvaluator {
    fn utilities(&mut self, space: &JointSpace, vector: &ConfigurationVector) -> Result<Vec<UtilityValue>, GovError> {
        let key = actuation_key(space, vector);
        let metrics = match self.cache.get(&key) {
            Some(m) => *m,
            None => {
                let traffic = self.plant.traffic.clone();
                let m = lookahead_metrics(&self.plant, &actuations(space, vector)?, &traffic, self.seed, self.ticks)?;
                self.cache.insert(key, m);
                m
            }
        };
        utilities_for(space, vector, &metrics, |c, cfg| {
            let ControllerKind::Congestion { problem, solver, .. } = &c.kind else { unreachable!() };
            Ok(congestion_utility(problem, solver, cfg, None)?.0)
        })
    }
}

/// Runs the simulation for `horizon` ticks under governance.
pub fn govern_loop(
    mut plant: Plant,
    controllers: &[ControllerSpec],
    spec: &GlobalUtilitySpec,
    policy: &TriggerPolicy,
    horizon: u64,
) -> Result<GovernedRun, GovError> {
    policy.validate()?;
    if horizon == 0 {
        return Err(GovError::Invalid("horizon must be at least 1 tick".into()));
    }
    let space = JointSpace::new(controllers)?;
    spec.validate(space.controllers().iter().map(|c| c.id.as_str()))?;
    plant.traffic.validate(plant.state.topology().node_count())?;

    let mut warnings = Vec::new();
    if !space.controllers().iter().any(ControllerSpec::actuates) {
        let msg = "no controller actuates the network; governance only selects evaluative configurations".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let window = policy.monitoring_window() as usize;
    let base_seed = plant.state.seed();
    let mut current: Vec<usize> = vec![0; space.controllers().len()];
    for a in actuations(&space, &space.vector(&current))? {
        apply(&mut plant.state, &mut plant.routing, a);
    }

    // Carried-over solver state per congestion controller.
    let mut warm_prices: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    // Congestion utility of the configuration in force, per controller.
    let mut adopted_congestion: BTreeMap<String, f64> = BTreeMap::new();

    let mut entries = Vec::new();
    let mut trace = SimulationTrace {
        nodes: plant.state.topology().node_count(),
        service_rate: plant.state.service_rate(),
        seed: base_seed,
        initial: plant.state.snapshot(),
        records: Vec::with_capacity(horizon as usize),
    };
    let mut utility_series = Vec::with_capacity(horizon as usize);
    let mut last_trigger = 0u64;
    let mut breach_pending = false;

    for t in 0..horizon {
        let reason = if policy.manual.contains(&t) {
            Some(TriggerReason::Manual)
        } else if t % policy.period == 0 {
            Some(TriggerReason::Periodic)
        } else if breach_pending {
            Some(TriggerReason::ThresholdBreach)
        } else {
            None
        };

        if let Some(reason) = reason {
            let seed = lookahead_seed(base_seed, t);
            let frozen =
                TrafficSpec { lambda: plant.traffic.lambda_at(t), load_steps: Vec::new(), ..plant.traffic.clone() };

            let mut metrics_cache: HashMap<String, Metrics> = HashMap::new();
            let actuating: Vec<usize> =
                (0..space.controllers().len()).filter(|&i| space.controllers()[i].actuates()).collect();
            let sub_size = actuating.iter().fold(1u128, |acc, &i| acc.saturating_mul(space.space(i).len() as u128));
            if sub_size <= PREFETCH_LIMIT {
                let mut keys: BTreeMap<String, Vec<Actuation>> = BTreeMap::new();
                let mut indices = current.clone();
                let mut counters = vec![0usize; actuating.len()];
                loop {
                    for (k, &pos) in actuating.iter().enumerate() {
                        indices[pos] = counters[k];
                    }
                    let v = space.vector(&indices);
                    keys.entry(actuation_key(&space, &v)).or_insert(actuations(&space, &v)?);
                    let mut k = actuating.len();
                    loop {
                        if k == 0 {
                            break;
                        }
                        k -= 1;
                        counters[k] += 1;
                        if counters[k] < space.space(actuating[k]).len() {
                            break;
                        }
                        counters[k] = 0;
                        if k == 0 {
                            k = usize::MAX;
                            break;
                        }
                    }
                    if k == usize::MAX || actuating.is_empty() {
                        break;
                    }
                }
                let computed: Vec<(String, Result<Metrics, GovError>)> = keys
                    .into_par_iter()
                    .map(|(key, acts)| {
                        let m = lookahead_metrics(&plant, &acts, &frozen, seed, policy.lookahead);
                        (key, m)
                    })
                    .collect();
                for (key, m) in computed {
                    metrics_cache.insert(key, m?);
                }
            }

            let mut congestion_cache: HashMap<(String, String), (f64, Vec<f64>)> = HashMap::new();
            let outcome = {
                let mut evaluator =
                    |space: &JointSpace, vector: &ConfigurationVector| -> Result<Vec<UtilityValue>, GovError> {
                        let key = actuation_key(space, vector);
                        let metrics = match metrics_cache.get(&key) {
                            Some(m) => *m,
                            None => {
                                let m = lookahead_metrics(
                                    &plant,
                                    &actuations(space, vector)?,
                                    &frozen,
                                    seed,
                                    policy.lookahead,
                                )?;
                                metrics_cache.insert(key, m);
                                m
                            }
                        };
                        utilities_for(space, vector, &metrics, |c, cfg| {
                            let cache_key = (c.id.clone(), cfg.key());
                            if let Some((u, _)) = congestion_cache.get(&cache_key) {
                                return Ok(*u);
                            }
                            let ControllerKind::Congestion { problem, solver, .. } = &c.kind else { unreachable!() };
                            let warm = if policy.reset_on_reconfigure { None } else { warm_prices.get(&c.id) };
                            let warm = warm.filter(|p| p.len() == problem.links());
                            let (u, prices) = congestion_utility(problem, solver, cfg, warm.map(Vec::as_slice))?;
                            congestion_cache.insert(cache_key, (u, prices));
                            Ok(u)
                        })
                    };
                search(&space, &mut evaluator, spec, policy.strategy, Some(&current), t)?
            };

            let chosen = outcome.best;
            let reconfigured = chosen.configuration.indices != current;
            if reconfigured {
                current = chosen.configuration.indices.clone();
                for a in actuations(&space, &chosen.configuration)? {
                    apply(&mut plant.state, &mut plant.routing, a);
                }
            }
            for c in space.controllers() {
                if matches!(c.kind, ControllerKind::Congestion { .. }) {
                    let cfg = chosen.configuration.get(&c.id).expect("vector covers every controller");
                    if let Some((u, prices)) = congestion_cache.get(&(c.id.clone(), cfg.key())) {
                        adopted_congestion.insert(c.id.clone(), *u);
                        warm_prices.insert(c.id.clone(), prices.clone());
                    }
                }
            }
            let threshold_unmet = spec.threshold.is_some_and(|th| chosen.global_utility < th);
            if threshold_unmet {
                log::info!("tick {t}: no configuration reaches the threshold; keeping best effort");
            }
            entries.push(GovernanceEntry {
                tick: t,
                reason,
                examined: outcome.examined,
                configuration: chosen.configuration,
                global_utility: chosen.global_utility,
                incumbent_utility: outcome.incumbent.global_utility,
                reconfigured,
                threshold_unmet,
            });
            last_trigger = t;
            breach_pending = false;
        }

        let record = plant.state.step(&plant.traffic, &plant.routing);
        if !record.is_conserved() {
            return Err(NetError::Conservation { tick: record.tick }.into());
        }
        trace.records.push(record);

        let len = trace.records.len();
        let metrics = monitor(&trace, len.saturating_sub(window)..len)?;
        let vector = space.vector(&current);
        let utilities = utilities_for(&space, &vector, &metrics, |c, cfg| match adopted_congestion.get(&c.id) {
            Some(u) => Ok(*u),
            None => {
                let ControllerKind::Congestion { problem, solver, .. } = &c.kind else { unreachable!() };
                let (u, _) = congestion_utility(problem, solver, cfg, None)?;
                Ok(u)
            }
        })?;
        let measured = aggregate(utilities.iter().map(|u| (u.controller.as_str(), u.value)), spec)?;
        utility_series.push(measured);

        if let Some(th) = spec.threshold {
            if t + 1 - last_trigger >= window as u64 && measured < th {
                breach_pending = true;
            }
        }
    }

    Ok(GovernedRun { governance: GovernanceTrace { entries }, trace, utility_series, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::{PerformanceModel, ResourceGrid};
    use crate::net::Topology;

    fn tradeoff_controllers() -> Vec<ControllerSpec> {
        vec![
            ControllerSpec::throughput(
                "tp",
                ResourceGrid::Range { min: 0, max: 50 },
                PerformanceModel::default_throughput(),
            ),
            ControllerSpec::shared_cost("cost", "tp", PerformanceModel::default_cost()),
        ]
    }

    fn ring_plant(lambda: f64, seed: u64) -> Plant {
        Plant {
            state: NetworkState::new(Topology::ring(16, 1).unwrap(), 1, seed),
            traffic: TrafficSpec::uniform(lambda),
            routing: RoutingPolicy::static_shortest_path(),
        }
    }

    #[test]
    fn degenerate_policy_triggers_once() {
        let horizon = 300;
        let run = govern_loop(
            ring_plant(0.1, 1),
            &tradeoff_controllers(),
            &GlobalUtilitySpec::weighted_sum(),
            &TriggerPolicy::periodic(horizon),
            horizon,
        )
        .unwrap();
        assert_eq!(run.governance.entries.len(), 1);
        let entry = &run.governance.entries[0];
        assert_eq!(entry.configuration.get("tp").unwrap().resources().unwrap(), 13);
        assert_eq!(run.utility_series.len(), horizon as usize);
        assert_eq!(run.warnings.len(), 1);
    }

    #[test]
    fn static_scenario_keeps_its_choice() {
        let controllers = vec![
            ControllerSpec::admission("adm", vec![Some(0), Some(1), None], 0.01),
            ControllerSpec::routing(
                "route",
                vec![RoutingPolicy::queue_aware(5.0), RoutingPolicy::static_shortest_path()],
            ),
        ];
        let spec = GlobalUtilitySpec::weighted_sum().with_weights([("adm", 1.0), ("route", 0.01)]);
        let run = govern_loop(ring_plant(0.1, 3), &controllers, &spec, &TriggerPolicy::periodic(250), 1000).unwrap();
        let entries = &run.governance.entries;
        assert_eq!(entries.len(), 4);
        assert_eq!(entries[0].configuration.indices, vec![2, 1]);
        for e in &entries[1..] {
            assert_eq!(e.configuration, entries[0].configuration);
            assert!(!e.reconfigured);
        }
        for e in entries {
            assert!(e.global_utility >= e.incumbent_utility);
        }
        assert!(run.trace.records.iter().all(|r| r.is_conserved()));
    }

    #[test]
    fn deterministic_given_seed() {
        let controllers = vec![ControllerSpec::admission("adm", vec![Some(1), Some(4), None], 0.01)];
        let spec = GlobalUtilitySpec::weighted_sum();
        let a = govern_loop(ring_plant(0.3, 5), &controllers, &spec, &TriggerPolicy::periodic(100), 400).unwrap();
        let b = govern_loop(ring_plant(0.3, 5), &controllers, &spec, &TriggerPolicy::periodic(100), 400).unwrap();
        assert_eq!(a.governance, b.governance);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.utility_series, b.utility_series);
    }

    #[test]
    fn manual_trigger_and_validation() {
        let mut policy = TriggerPolicy::periodic(1000);
        policy.manual = vec![10];
        let run =
            govern_loop(ring_plant(0.0, 1), &tradeoff_controllers(), &GlobalUtilitySpec::weighted_sum(), &policy, 50)
                .unwrap();
        let reasons: Vec<_> = run.governance.entries.iter().map(|e| e.reason).collect();
        assert_eq!(reasons, vec![TriggerReason::Periodic, TriggerReason::Manual]);

        let bad = TriggerPolicy::periodic(0);
        assert!(govern_loop(ring_plant(0.0, 1), &tradeoff_controllers(), &GlobalUtilitySpec::weighted_sum(), &bad, 5)
            .is_err());
    }

    #[test]
    fn unreachable_threshold_is_flagged_not_fatal() {
        let spec = GlobalUtilitySpec::weighted_sum().with_threshold(Some(1e6));
        let run = govern_loop(ring_plant(0.0, 1), &tradeoff_controllers(), &spec, &TriggerPolicy::periodic(100), 300)
            .unwrap();
        assert!(run.governance.entries.iter().all(|e| e.threshold_unmet));
        // breaches re-trigger once per monitoring window
        assert!(run.governance.entries.iter().any(|e| e.reason == TriggerReason::ThresholdBreach));
        assert_eq!(run.fraction_meeting(spec.threshold), 0.0);
    }
}
