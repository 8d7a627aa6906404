use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controllers::{config_space, monitor, Actuation, ControllerSpec, Metrics, PerformanceModel};

use super::sweep::NetworkSetup;
use super::LabError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMetric {
    DeliveredRate,
    MeanDelay,
    MeanQueueTotal,
    Utilization,
}

impl CalibrationMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            CalibrationMetric::DeliveredRate => "delivered_rate",
            CalibrationMetric::MeanDelay => "mean_delay",
            CalibrationMetric::MeanQueueTotal => "mean_queue_total",
            CalibrationMetric::Utilization => "utilization",
        }
    }

    fn read(self, m: &Metrics) -> f64 {
        match self {
            CalibrationMetric::DeliveredRate => m.delivered_rate,
            CalibrationMetric::MeanDelay => m.mean_delay,
            CalibrationMetric::MeanQueueTotal => m.mean_queue_total,
            CalibrationMetric::Utilization => m.utilization,
        }
    }
}

/// Builds an empirical performance model for an actuating controller by
/// running the network under each of its configurations and averaging the
/// metric, measured over the trailing half of `horizon`, across `seeds`.
pub fn calibrate(
    setup: &NetworkSetup,
    controller: &ControllerSpec,
    metric: CalibrationMetric,
    seeds: &[u64],
    horizon: u64,
) -> Result<PerformanceModel, LabError> {
    controller.validate()?;
    if !controller.actuates() {
        return Err(LabError::Invalid(format!("controller {} does not act on the network", controller.id)));
    }
    if seeds.is_empty() || horizon < 2 {
        return Err(LabError::Invalid("calibration needs at least one seed and two ticks".into()));
    }
    let space = config_space(controller);
    let jobs: Vec<(usize, u64)> = (0..space.len()).flat_map(|i| seeds.iter().map(move |&s| (i, s))).collect();
    let values: Vec<Result<f64, LabError>> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let mut state = setup.state(seed)?;
            let mut routing = setup.routing;
            match controller.actuation(&space[i])? {
                Some(Actuation::Admission(limit)) => state.set_admission_limit(limit),
                Some(Actuation::Routing(policy)) => routing = policy,
                None => {}
            }
            let trace = state.run(&setup.traffic, &routing, horizon)?;
            let len = trace.len();
            Ok(metric.read(&monitor(&trace, len - len / 2..len)?))
        })
        .collect();
    let values = values.into_iter().collect::<Result<Vec<_>, _>>()?;
    let table: BTreeMap<String, f64> = space
        .iter()
        .enumerate()
        .map(|(i, cfg)| {
            let per = &values[i * seeds.len()..(i + 1) * seeds.len()];
            (cfg.key(), per.iter().sum::<f64>() / seeds.len() as f64)
        })
        .collect();
    Ok(PerformanceModel::Empirical { metric: metric.as_str().into(), table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::predict;
    use crate::net::{RoutingPolicy, TopologySpec, TrafficSpec};

    #[test]
    fn table_reproduces_measurement() {
        let setup = NetworkSetup {
            topology: TopologySpec::Ring { nodes: 16, link_capacity: 1 },
            service_rate: 1,
            traffic: TrafficSpec::uniform(0.2),
            routing: RoutingPolicy::static_shortest_path(),
        };
        let adm = ControllerSpec::admission("adm", vec![Some(0), Some(2), None], 0.01);
        let model = calibrate(&setup, &adm, CalibrationMetric::DeliveredRate, &[1, 2], 400).unwrap();
        let space = config_space(&adm);
        assert_eq!(predict(&model, &space[0], 0.0).unwrap(), 0.0);

        // lookup equals a direct measurement
        let mut direct = 0.0;
        for seed in [1, 2] {
            let mut state = setup.state(seed).unwrap();
            let trace = state.run(&setup.traffic, &setup.routing, 400).unwrap();
            direct += monitor(&trace, 200..400).unwrap().delivered_rate;
        }
        assert_eq!(predict(&model, &space[2], 0.0).unwrap(), direct / 2.0);
        assert_eq!(model, calibrate(&setup, &adm, CalibrationMetric::DeliveredRate, &[1, 2], 400).unwrap());
    }

    #[test]
    fn rejects_evaluative_controller() {
        let setup = NetworkSetup {
            topology: TopologySpec::Ring { nodes: 4, link_capacity: 1 },
            service_rate: 1,
            traffic: TrafficSpec::uniform(0.1),
            routing: RoutingPolicy::static_shortest_path(),
        };
        let tp = ControllerSpec::throughput(
            "tp",
            crate::controllers::ResourceGrid::Range { min: 0, max: 3 },
            PerformanceModel::default_throughput(),
        );
        assert!(calibrate(&setup, &tp, CalibrationMetric::DeliveredRate, &[1], 100).is_err());
    }
}
