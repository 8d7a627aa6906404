//! Two reactive scalers sharing one resource pool, with and without governance.

use serde::{Deserialize, Serialize};

use crate::controllers::{predict, Configuration, ControllerSpec, Metrics, PerformanceModel, ResourceGrid};
use crate::governance::{
    search, GlobalUtilitySpec, GovernanceEntry, GovernanceTrace, JointSpace, StaticEvaluator, Strategy, TriggerReason,
};

use super::oscillation::{oscillation_metrics, OscillationReport};
use super::LabError;

/// Scales the pool so that `load / (n · unit_capacity)` meets a utilization target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilizationScaler {
    #[serde(default = "default_target")]
    pub target: f64,
    /// Fraction of the observed error corrected per tick; 0 disables the scaler.
    #[serde(default = "default_gain")]
    pub gain: f64,
    #[serde(default = "default_delay")]
    pub delay: u64,
}

/// Shrinks the pool whenever its cost exceeds a cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostCapScaler {
    /// Explicit cost cap; by default `cap_factor` times the cost at the
    /// utility-maximizing pool size.
    #[serde(default)]
    pub cap: Option<f64>,
    #[serde(default = "default_cap_factor")]
    pub cap_factor: f64,
    #[serde(default = "default_gain")]
    pub gain: f64,
    #[serde(default = "default_delay")]
    pub delay: u64,
}

fn default_target() -> f64 {
    0.5
}
fn default_gain() -> f64 {
    1.0
}
fn default_delay() -> u64 {
    1
}
fn default_cap_factor() -> f64 {
    1.1
}

impl Default for UtilizationScaler {
    fn default() -> Self {
        UtilizationScaler { target: default_target(), gain: default_gain(), delay: default_delay() }
    }
}

impl Default for CostCapScaler {
    fn default() -> Self {
        CostCapScaler { cap: None, cap_factor: default_cap_factor(), gain: default_gain(), delay: default_delay() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GovernanceMode {
    #[default]
    Off,
    On,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupledScenario {
    #[serde(default)]
    pub n_min: u32,
    #[serde(default = "default_n_max")]
    pub n_max: u32,
    #[serde(default)]
    pub n_initial: u32,
    /// Offered load in resource units.
    #[serde(default = "default_load")]
    pub load: f64,
    #[serde(default = "default_unit_capacity")]
    pub unit_capacity: f64,
    #[serde(default)]
    pub utilization_scaler: UtilizationScaler,
    #[serde(default)]
    pub cost_scaler: CostCapScaler,
    #[serde(default = "PerformanceModel::default_throughput")]
    pub throughput: PerformanceModel,
    #[serde(default = "PerformanceModel::default_cost")]
    pub cost: PerformanceModel,
    #[serde(default)]
    pub governance: GovernanceMode,
    /// Ticks between governance triggers.
    #[serde(default = "default_trigger_period")]
    pub trigger_period: u64,
    /// Trailing window for the oscillation report.
    #[serde(default = "default_window")]
    pub window: usize,
}

fn default_n_max() -> u32 {
    50
}
fn default_load() -> f64 {
    15.0
}
fn default_unit_capacity() -> f64 {
    1.0
}
fn default_trigger_period() -> u64 {
    100
}
fn default_window() -> usize {
    500
}

impl Default for CoupledScenario {
    fn default() -> Self {
        CoupledScenario {
            n_min: 0,
            n_max: default_n_max(),
            n_initial: 0,
            load: default_load(),
            unit_capacity: default_unit_capacity(),
            utilization_scaler: UtilizationScaler::default(),
            cost_scaler: CostCapScaler::default(),
            throughput: PerformanceModel::default_throughput(),
            cost: PerformanceModel::default_cost(),
            governance: GovernanceMode::Off,
            trigger_period: default_trigger_period(),
            window: default_window(),
        }
    }
}

impl CoupledScenario {
    pub fn governed(mut self) -> Self {
        self.governance = GovernanceMode::On;
        self
    }

    pub fn validate(&self) -> Result<(), LabError> {
        if self.n_min > self.n_max || !(self.n_min..=self.n_max).contains(&self.n_initial) {
            return Err(LabError::Invalid(format!(
                "need n_min ≤ n_initial ≤ n_max, got {} ≤ {} ≤ {}",
                self.n_min, self.n_initial, self.n_max
            )));
        }
        if !(self.load >= 0.0 && self.unit_capacity > 0.0) {
            return Err(LabError::Invalid("load must be non-negative and unit capacity positive".into()));
        }
        let u = &self.utilization_scaler;
        let c = &self.cost_scaler;
        if !(u.target > 0.0 && u.target <= 1.0) {
            return Err(LabError::Invalid(format!("utilization target must lie in (0, 1], got {}", u.target)));
        }
        if !(u.gain >= 0.0 && c.gain >= 0.0 && u.gain.is_finite() && c.gain.is_finite()) {
            return Err(LabError::Invalid("scaler gains must be finite and non-negative".into()));
        }
        if !(c.cap_factor > 0.0) || c.cap.is_some_and(|cap| !cap.is_finite()) {
            return Err(LabError::Invalid("cost cap must be finite and its factor positive".into()));
        }
        if self.trigger_period == 0 {
            return Err(LabError::Invalid("trigger period must be at least 1".into()));
        }
        self.throughput.validate()?;
        self.cost.validate()?;
        Ok(())
    }

    fn controllers(&self) -> Vec<ControllerSpec> {
        vec![
            ControllerSpec::throughput(
                "throughput",
                ResourceGrid::Range { min: self.n_min, max: self.n_max },
                self.throughput.clone(),
            ),
            ControllerSpec::shared_cost("cost", "throughput", self.cost.clone()),
        ]
    }

    /// `T(n) − C(n)`.
    pub fn utility(&self, n: u32) -> Result<f64, LabError> {
        let cfg = Configuration::new().with("n", n);
        Ok(predict(&self.throughput, &cfg, self.load)? - predict(&self.cost, &cfg, self.load)?)
    }

    /// Smallest pool meeting the utilization target (the largest pool if none does).
    fn utilization_goal(&self) -> u32 {
        (self.n_min..=self.n_max)
            .find(|&n| n > 0 && self.load / (f64::from(n) * self.unit_capacity) <= self.utilization_scaler.target)
            .unwrap_or(self.n_max)
    }

    /// Largest pool whose cost stays within `cap` (the smallest pool if none does).
    fn cost_goal(&self, cap: f64) -> Result<u32, LabError> {
        let mut goal = self.n_min;
        for n in self.n_min..=self.n_max {
            if predict(&self.cost, &Configuration::new().with("n", n), self.load)? <= cap {
                goal = n;
            }
        }
        Ok(goal)
    }

    fn argmax(&self) -> Result<u32, LabError> {
        let mut best = (self.n_min, self.utility(self.n_min)?);
        for n in self.n_min + 1..=self.n_max {
            let u = self.utility(n)?;
            if u > best.1 {
                best = (n, u);
            }
        }
        Ok(best.0)
    }

    fn cost_cap(&self) -> Result<f64, LabError> {
        match self.cost_scaler.cap {
            Some(cap) => Ok(cap),
            None => {
                let n = self.argmax()?;
                Ok(self.cost_scaler.cap_factor * predict(&self.cost, &Configuration::new().with("n", n), self.load)?)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledRun {
    pub n_series: Vec<u32>,
    /// `T(n_t) − C(n_t)` per tick.
    pub utility_series: Vec<f64>,
    pub report: OscillationReport,
    pub governance: Option<GovernanceTrace>,
}

impl CoupledRun {
    /// Mean utility over the trailing `window` ticks.
    pub fn windowed_utility(&self, window: usize) -> f64 {
        let w = window.clamp(1, self.utility_series.len());
        self.utility_series[self.utility_series.len() - w..].iter().sum::<f64>() / w as f64
    }
}

fn scaled(gain: f64, error: f64) -> i64 {
    (gain * error).round() as i64
}

/// Iterates the two-scaler map for `horizon` ticks.
///
/// Ungoverned, each scaler applies its full correction every tick from its
/// delayed observation of `n`. Governed, a periodic exhaustive search over
/// `T(n) − C(n)` fixes a set point; both scalers then steer towards it, act
/// only when their observation is off by more than their delay, and their
/// combined step is limited to one unit per tick.
pub fn run_coupled(scenario: &CoupledScenario, horizon: u64) -> Result<CoupledRun, LabError> {
    scenario.validate()?;
    if horizon < scenario.window as u64 {
        return Err(LabError::Invalid(format!(
            "horizon {horizon} is shorter than the report window {}",
            scenario.window
        )));
    }
    let a = &scenario.utilization_scaler;
    let b = &scenario.cost_scaler;
    let a_goal = scenario.utilization_goal();
    let b_goal = scenario.cost_goal(scenario.cost_cap()?)?;

    let governed = scenario.governance == GovernanceMode::On;
    let space = JointSpace::new(&scenario.controllers())?;
    let spec = GlobalUtilitySpec::weighted_sum();
    let mut entries = Vec::new();
    let mut set_point: Option<u32> = None;

    let mut n_series: Vec<u32> = Vec::with_capacity(horizon as usize);
    let mut n = scenario.n_initial;
    let observe = |series: &[u32], delay: u64| -> i64 {
        let t = series.len() as i64 - 1;
        let idx = t - delay as i64;
        if idx < 0 {
            i64::from(scenario.n_initial)
        } else {
            i64::from(series[idx as usize])
        }
    };

    for t in 0..horizon {
        n_series.push(n);
        if governed && t % scenario.trigger_period == 0 {
            let incumbent = [0, (n - scenario.n_min) as usize];
            let mut evaluator = StaticEvaluator { metrics: Metrics::default() };
            let outcome = search(&space, &mut evaluator, &spec, Strategy::exhaustive(), Some(&incumbent), t)?;
            let chosen = outcome.best.configuration.get("throughput").expect("throughput is governed").resources()?;
            let reconfigured = set_point != Some(chosen);
            set_point = Some(chosen);
            entries.push(GovernanceEntry {
                tick: t,
                reason: TriggerReason::Periodic,
                examined: outcome.examined,
                configuration: outcome.best.configuration,
                global_utility: outcome.best.global_utility,
                incumbent_utility: outcome.incumbent.global_utility,
                reconfigured,
                threshold_unmet: false,
            });
        }

        let obs_a = observe(&n_series, a.delay);
        let obs_b = observe(&n_series, b.delay);
        let step = match set_point {
            None => {
                let da = scaled(a.gain, (i64::from(a_goal) - obs_a) as f64);
                let db = -scaled(b.gain, (obs_b - i64::from(b_goal)).max(0) as f64);
                da + db
            }
            Some(sp) => {
                let sp = i64::from(sp);
                let da =
                    if (sp - obs_a).abs() > a.delay as i64 { scaled(a.gain, (sp - obs_a) as f64).signum() } else { 0 };
                let db = if obs_b - sp > b.delay as i64 { -scaled(b.gain, (obs_b - sp) as f64).signum() } else { 0 };
                (da + db).clamp(-1, 1)
            }
        };
        n = (i64::from(n) + step).clamp(i64::from(scenario.n_min), i64::from(scenario.n_max)) as u32;
    }

    let utility_series = n_series.iter().map(|&k| scenario.utility(k)).collect::<Result<Vec<_>, _>>()?;
    let as_f64: Vec<f64> = n_series.iter().map(|&k| f64::from(k)).collect();
    let report = oscillation_metrics("n", &as_f64, scenario.window)?;
    Ok(CoupledRun { n_series, utility_series, report, governance: governed.then_some(GovernanceTrace { entries }) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledComparison {
    pub ungoverned: OscillationReport,
    pub governed: OscillationReport,
    /// Ungoverned over governed amplitude; `None` when the governed run is flat.
    pub amplitude_ratio: Option<f64>,
    pub governed_final_n: u32,
    pub ungoverned_windowed_utility: f64,
    pub governed_windowed_utility: f64,
}

/// Runs the scenario with governance off and on over the same horizon.
pub fn compare_coupled(
    scenario: &CoupledScenario,
    horizon: u64,
) -> Result<(CoupledRun, CoupledRun, CoupledComparison), LabError> {
    let off = run_coupled(&CoupledScenario { governance: GovernanceMode::Off, ..scenario.clone() }, horizon)?;
    let on = run_coupled(&CoupledScenario { governance: GovernanceMode::On, ..scenario.clone() }, horizon)?;
    let amplitude_ratio = (on.report.amplitude > 0.0).then(|| off.report.amplitude / on.report.amplitude);
    let comparison = CoupledComparison {
        ungoverned: off.report.clone(),
        governed: on.report.clone(),
        amplitude_ratio,
        governed_final_n: *on.n_series.last().expect("horizon ≥ window ≥ 10"),
        ungoverned_windowed_utility: off.windowed_utility(scenario.window),
        governed_windowed_utility: on.windowed_utility(scenario.window),
    };
    Ok((off, on, comparison))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct iteration of the ungoverned default map.
    fn oracle(horizon: usize) -> Vec<i64> {
        let mut n = vec![0i64];
        let mut prev = 0i64;
        for _ in 1..horizon {
            let cur = *n.last().unwrap();
            let next = (cur + (30 - prev) - (prev - 14).max(0)).clamp(0, 50);
            prev = cur;
            n.push(next);
        }
        n
    }

    #[test]
    fn ungoverned_matches_direct_iteration() {
        let run = run_coupled(&CoupledScenario::default(), 1000).unwrap();
        let expected = oracle(1000);
        assert_eq!(run.n_series.iter().map(|&k| i64::from(k)).collect::<Vec<_>>(), expected);
        assert_eq!(run.report.amplitude, 50.0);
        assert_eq!(run.report.period, Some(5));
        assert!(run.governance.is_none());
    }

    #[test]
    fn governed_converges_to_argmax() {
        let run = run_coupled(&CoupledScenario::default().governed(), 1000).unwrap();
        assert_eq!(*run.n_series.last().unwrap(), 13);
        assert_eq!(run.report.amplitude, 0.0);
        let trace = run.governance.unwrap();
        assert_eq!(trace.entries.len(), 10);
        assert!(trace.entries.iter().all(|e| e.examined == 51));
        assert!(trace.entries[0].reconfigured && !trace.entries[1].reconfigured);
    }

    #[test]
    fn governed_from_above_also_converges() {
        let scenario = CoupledScenario { n_initial: 50, ..CoupledScenario::default() }.governed();
        let run = run_coupled(&scenario, 600).unwrap();
        assert!(run.n_series[100..].iter().all(|&k| k == 13));
    }

    #[test]
    fn disabled_scalers_keep_n_fixed() {
        let scenario = CoupledScenario {
            n_initial: 20,
            utilization_scaler: UtilizationScaler { gain: 0.0, ..Default::default() },
            cost_scaler: CostCapScaler { gain: 0.0, ..Default::default() },
            ..CoupledScenario::default()
        };
        let run = run_coupled(&scenario, 600).unwrap();
        assert!(run.n_series.iter().all(|&k| k == 20));
        assert_eq!(run.report.amplitude, 0.0);
    }

    #[test]
    fn comparison_and_utility() {
        let (off, on, cmp) = compare_coupled(&CoupledScenario::default(), 2000).unwrap();
        assert_eq!(cmp.amplitude_ratio, None);
        assert_eq!(cmp.governed_final_n, 13);
        assert!(cmp.governed_windowed_utility >= cmp.ungoverned_windowed_utility);
        assert_eq!(off.utility_series.len(), 2000);
        assert!((on.utility_series[1999] - CoupledScenario::default().utility(13).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid() {
        let bad = CoupledScenario { n_initial: 60, ..CoupledScenario::default() };
        assert!(run_coupled(&bad, 1000).is_err());
        assert!(run_coupled(&CoupledScenario::default(), 100).is_err());
    }
}
