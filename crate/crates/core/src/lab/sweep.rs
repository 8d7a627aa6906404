use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::net::{
    order_parameter, NetError, NetworkState, RoutingPolicy, Topology, TopologySpec, TrafficSpec, MIN_ORDER_WINDOW,
};

use super::LabError;

pub const DEFAULT_TRANSITION_THRESHOLD: f64 = 0.05;

/// Everything needed to instantiate a network run except the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSetup {
    pub topology: TopologySpec,
    pub service_rate: u32,
    pub traffic: TrafficSpec,
    pub routing: RoutingPolicy,
}

impl NetworkSetup {
    pub fn state(&self, seed: u64) -> Result<NetworkState, NetError> {
        Ok(NetworkState::new(Topology::build(&self.topology)?, self.service_rate, seed))
    }

    /// The traffic at a fixed injection rate, without scheduled load changes.
    pub fn traffic_at(&self, lambda: f64) -> TrafficSpec {
        TrafficSpec { lambda, load_steps: Vec::new(), ..self.traffic.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub setup: NetworkSetup,
    pub lambdas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub horizon: u64,
    /// Trailing ticks over which the order parameter is measured; defaults to half the horizon.
    pub measure_ticks: Option<u64>,
}

impl SweepConfig {
    pub fn measured(&self) -> u64 {
        self.measure_ticks.unwrap_or(self.horizon / 2)
    }

    pub fn validate(&self) -> Result<(), LabError> {
        if self.lambdas.is_empty() {
            return Err(LabError::Invalid("sweep needs at least one λ value".into()));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(LabError::Invalid(format!("λ = {l} lies outside [0, 1]")));
        }
        if self.lambdas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LabError::Invalid("λ values must be strictly increasing".into()));
        }
        if self.seeds.len() < 2 {
            return Err(LabError::Invalid(format!("sweep needs at least 2 seeds, got {}", self.seeds.len())));
        }
        let measured = self.measured();
        if measured < MIN_ORDER_WINDOW as u64 || measured > self.horizon {
            return Err(LabError::Invalid(format!(
                "measurement window of {measured} ticks must lie in [{MIN_ORDER_WINDOW}, horizon = {}]",
                self.horizon
            )));
        }
        if self.setup.service_rate == 0 {
            return Err(LabError::Invalid("service rate must be at least 1".into()));
        }
        Topology::build(&self.setup.topology)?;
        self.setup.traffic_at(self.lambdas[0]).validate(self.setup.topology.nodes())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub mean: f64,
    /// Sample standard deviation across seeds.
    pub std: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter: String,
    pub points: Vec<SweepPoint>,
}

/// `count` evenly spaced values from `start` in increments of `step`, computed
/// by multiplication so no rounding error accumulates.
pub fn lambda_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || stop < start {
        return vec![start];
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|i| start + i as f64 * step).collect()
}

fn summarize(value: f64, samples: &[f64]) -> SweepPoint {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 { samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    SweepPoint { value, mean, std: var.sqrt(), seeds: samples.len() }
}

/// ρ over the window, taken as 0 when nothing was created in it.
fn measured_rho(trace: &crate::net::SimulationTrace, measured: u64) -> Result<f64, NetError> {
    let end = trace.len();
    match order_parameter(trace, end - measured as usize..end) {
        Err(NetError::UndefinedOrderParameter) => Ok(0.0),
        other => other,
    }
}

/// Mean order parameter over seeds for each λ. Runs are independent and
/// executed in parallel; results are merged in (λ, seed) order.
pub fn phase_sweep(config: &SweepConfig) -> Result<SweepResult, LabError> {
    config.validate()?;
    let measured = config.measured();
    let jobs: Vec<(usize, usize)> =
        (0..config.lambdas.len()).flat_map(|i| (0..config.seeds.len()).map(move |s| (i, s))).collect();
    let rhos: Vec<Result<f64, NetError>> = jobs
        .par_iter()
        .map(|&(i, s)| {
            let mut state = config.setup.state(config.seeds[s])?;
            let traffic = config.setup.traffic_at(config.lambdas[i]);
            let trace = state.run(&traffic, &config.setup.routing, config.horizon)?;
            measured_rho(&trace, measured)
        })
        .collect();
    let rhos = rhos.into_iter().collect::<Result<Vec<f64>, NetError>>()?;
    let per = config.seeds.len();
    let points = config.lambdas.iter().enumerate().map(|(i, &l)| summarize(l, &rhos[i * per..(i + 1) * per])).collect();
    Ok(SweepResult { parameter: "lambda".into(), points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HysteresisResult {
    pub up: SweepResult,
    /// Points in increasing λ order, measured while sweeping downward.
    pub down: SweepResult,
}

/// Per-seed order parameters of the upward and downward passes.
type UpDown = (Vec<f64>, Vec<f64>);

/// Sweeps λ up then back down, each stage continuing from the previous stage's
/// terminal network state. Each stage runs `config.horizon` ticks.
pub fn hysteresis_sweep(config: &SweepConfig) -> Result<HysteresisResult, LabError> {
    config.validate()?;
    let measured = config.measured();
    let n = config.lambdas.len();
    let per_seed: Vec<Result<UpDown, NetError>> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut state = config.setup.state(seed)?;
            let mut up = Vec::with_capacity(n);
            for &l in &config.lambdas {
                let trace = state.run(&config.setup.traffic_at(l), &config.setup.routing, config.horizon)?;
                up.push(measured_rho(&trace, measured)?);
            }
            let mut down = vec![0.0; n];
            for i in (0..n).rev() {
                let trace =
                    state.run(&config.setup.traffic_at(config.lambdas[i]), &config.setup.routing, config.horizon)?;
                down[i] = measured_rho(&trace, measured)?;
            }
            Ok((up, down))
        })
        .collect();
    let per_seed = per_seed.into_iter().collect::<Result<Vec<_>, NetError>>()?;
    let collect = |pick: fn(&UpDown) -> &Vec<f64>| SweepResult {
        parameter: "lambda".into(),
        points: (0..n)
            .map(|i| summarize(config.lambdas[i], &per_seed.iter().map(|r| pick(r)[i]).collect::<Vec<_>>()))
            .collect(),
    };
    Ok(HysteresisResult { up: collect(|r| &r.0), down: collect(|r| &r.1) })
}

/// Linear interpolation of the first upward crossing of `threshold` by the
/// mean order parameter.
pub fn detect_transition(sweep: &SweepResult, threshold: f64) -> Result<f64, LabError> {
    let pts = &sweep.points;
    if pts.len() < 4 {
        return Err(LabError::TooFewPoints { points: pts.len() });
    }
    let i = pts.iter().position(|p| p.mean >= threshold).ok_or(LabError::NoTransition { threshold })?;
    if i == 0 {
        return Err(LabError::NoTransition { threshold });
    }
    let (a, b) = (&pts[i - 1], &pts[i]);
    Ok(a.value + (threshold - a.mean) / (b.mean - a.mean) * (b.value - a.value))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sweep(points: &[(f64, f64)]) -> SweepResult {
        SweepResult {
            parameter: "lambda".into(),
            points: points.iter().map(|&(value, mean)| SweepPoint { value, mean, std: 0.0, seeds: 2 }).collect(),
        }
    }

    fn ring_setup() -> NetworkSetup {
        NetworkSetup {
            topology: TopologySpec::Ring { nodes: 16, link_capacity: 1 },
            service_rate: 1,
            traffic: TrafficSpec::uniform(0.0),
            routing: RoutingPolicy::static_shortest_path(),
        }
    }

    #[test]
    fn step_function_transition() {
        let grid = lambda_grid(0.05, 0.4, 0.05);
        let s = sweep(&grid.iter().map(|&l| (l, if l < 0.2 - 1e-12 { 0.0 } else { 0.5 })).collect::<Vec<_>>());
        let lc = detect_transition(&s, DEFAULT_TRANSITION_THRESHOLD).unwrap();
        assert!((lc - 0.2).abs() <= 0.05 + 1e-12, "{lc}");
    }

    #[test]
    fn no_transition_and_too_few_points() {
        let zeros = sweep(&[(0.1, 0.0), (0.2, 0.0), (0.3, 0.0), (0.4, 0.0)]);
        assert!(matches!(detect_transition(&zeros, 0.05), Err(LabError::NoTransition { .. })));
        let short = sweep(&[(0.1, 0.0), (0.2, 1.0)]);
        assert!(matches!(detect_transition(&short, 0.05), Err(LabError::TooFewPoints { points: 2 })));
    }

    #[test]
    fn outside_points_do_not_move_the_estimate() {
        let base = sweep(&[(0.2, 0.0), (0.25, 0.02), (0.3, 0.1), (0.35, 0.3)]);
        let wider = sweep(&[(0.1, 0.0), (0.15, 0.0), (0.2, 0.0), (0.25, 0.02), (0.3, 0.1), (0.35, 0.3), (0.4, 0.5)]);
        assert_eq!(detect_transition(&base, 0.05).unwrap(), detect_transition(&wider, 0.05).unwrap());
    }

    #[test]
    fn grid_is_exact() {
        let g = lambda_grid(0.05, 0.5, 0.025);
        assert_eq!(g.len(), 19);
        assert!((g[18] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn validation_rules() {
        let mut cfg = SweepConfig {
            setup: ring_setup(),
            lambdas: vec![0.1, 0.2],
            seeds: vec![1],
            horizon: 400,
            measure_ticks: None,
        };
        assert!(phase_sweep(&cfg).is_err());
        cfg.seeds = vec![1, 2];
        cfg.lambdas = vec![0.2, 0.1];
        assert!(phase_sweep(&cfg).is_err());
        cfg.lambdas = vec![0.1, 1.5];
        assert!(phase_sweep(&cfg).is_err());
        cfg.lambdas = vec![0.0, 0.1];
        cfg.horizon = 150;
        assert!(phase_sweep(&cfg).is_err());
    }

    #[test]
    fn below_capacity_is_free_flow_and_above_is_congested() {
        let cfg = SweepConfig {
            setup: ring_setup(),
            lambdas: vec![0.0, 0.05, 0.1, 0.5, 0.6],
            seeds: vec![1, 2],
            horizon: 2000,
            measure_ticks: None,
        };
        let result = phase_sweep(&cfg).unwrap();
        assert_eq!(result.points[0].mean, 0.0);
        assert!(result.points[..3].iter().all(|p| p.mean <= 0.05));
        assert!(result.points[3..].iter().all(|p| p.mean >= 0.3));
        assert_eq!(result, phase_sweep(&cfg).unwrap());
    }

    #[test]
    fn hysteresis_runs_both_directions() {
        let cfg = SweepConfig {
            setup: ring_setup(),
            lambdas: vec![0.05, 0.5],
            seeds: vec![1, 2],
            horizon: 400,
            measure_ticks: None,
        };
        let h = hysteresis_sweep(&cfg).unwrap();
        assert_eq!(h.up.points.len(), 2);
        assert_eq!(h.down.points[0].value, 0.05);
        // After the congested stage the low-load stage drains the backlog.
        assert!(h.down.points[0].mean <= 0.0);
    }
}
