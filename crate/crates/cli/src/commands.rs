use std::fs;
use std::path::Path;

use serde_json::json;

use netgov_core::governance::{
    evaluate_space, govern_loop, pareto_indices, GovernanceEvaluation, JointSpace, MeasuredEvaluator, Plant,
    StaticEvaluator,
};
use netgov_core::lab::{
    calibrate as calibrate_model, compare_coupled, detect_transition, hysteresis_sweep, phase_sweep, LabError,
};
use netgov_core::net::{capacity_bound, NetworkState, Topology};
use netgov_core::num::{solve_num, verify_kkt, RateProblem, SolverOptions};
use netgov_core::report::{self, content_hash, stamped_json, Provenance};
use netgov_core::scenario::{Experiment, Scenario};

use crate::error::CliError;

const TOOL: &str = "netgov";
const KKT_TOLERANCE: f64 = 1e-6;

/// Files produced by a command, written together once everything succeeded.
struct Artifacts(Vec<(String, String)>);

impl Artifacts {
    fn new() -> Self {
        Artifacts(Vec::new())
    }

    fn add(&mut self, name: impl Into<String>, content: String) {
        self.0.push((name.into(), content));
    }

    fn write(self, dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(dir)?;
        for (name, content) in self.0 {
            fs::write(dir.join(&name), content)?;
        }
        Ok(())
    }
}

fn load(path: &Path, seeds_override: Option<Vec<u64>>) -> Result<(Scenario, Provenance), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let scenario = Scenario::from_json(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let hash = scenario.hash();
    let scenario = match seeds_override {
        Some(seeds) => scenario.with_seeds(seeds)?,
        None => scenario,
    };
    let provenance = Provenance {
        tool: TOOL.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        scenario_hash: hash,
        seeds: scenario.seeds.clone(),
    };
    Ok((scenario, provenance))
}

pub fn simulate(path: &Path, out: &Path, seeds: Option<Vec<u64>>) -> Result<(), CliError> {
    let (scenario, prov) = load(path, seeds)?;
    let setup = scenario.network()?;
    let mut artifacts = Artifacts::new();
    let mut runs = Vec::new();
    for &seed in &scenario.seeds {
        let mut state = setup.state(seed)?;
        let trace = state.run(&setup.traffic, &setup.routing, scenario.horizon)?;
        let last = trace.records.last().copied().expect("horizon ≥ 1");
        let delivered_delay: u64 = trace.records.iter().map(|r| r.delay_sum_now).sum();
        runs.push(json!({
            "seed": seed,
            "ticks": trace.len(),
            "created_total": last.created,
            "delivered_total": last.delivered,
            "dropped_total": last.dropped,
            "blocked_total": last.blocked,
            "in_flight": last.in_flight,
            "queue_total": last.queue_total,
            "mean_delay": if last.delivered > 0 { delivered_delay as f64 / last.delivered as f64 } else { 0.0 },
            "conserved": trace.records.iter().all(|r| r.is_conserved()),
        }));
        artifacts.add(format!("trace-{seed}.csv"), report::trace_csv(&prov, &trace));
    }
    let created_total: u64 = runs.iter().map(|r| r["created_total"].as_u64().unwrap_or(0)).sum();
    let summary = json!({
        "command": "simulate",
        "created_total": created_total,
        "conserved": runs.iter().all(|r| r["conserved"] == true),
        "runs": runs,
    });
    artifacts.add("summary.json", stamped_json(&prov, &summary));
    artifacts.write(out)
}

pub fn sweep(path: &Path, out: &Path, seeds: Option<Vec<u64>>) -> Result<(), CliError> {
    let (scenario, prov) = load(path, seeds)?;
    let config = scenario.sweep_config()?;
    let topology = Topology::build(&config.setup.topology)?;
    let bound = capacity_bound(&topology, config.setup.service_rate);
    let mut artifacts = Artifacts::new();
    match &scenario.experiment {
        Some(Experiment::PhaseSweep { threshold, .. }) => {
            let result = phase_sweep(&config)?;
            let transition = match detect_transition(&result, *threshold) {
                Ok(lambda_c) => json!({
                    "transition_detected": true,
                    "lambda_c": lambda_c,
                    "threshold": threshold,
                    "capacity_bound": bound,
                    "relative_error": (lambda_c - bound).abs() / bound,
                }),
                Err(e @ (LabError::NoTransition { .. } | LabError::TooFewPoints { .. })) => json!({
                    "transition_detected": false,
                    "lambda_c": null,
                    "reason": e.to_string(),
                    "threshold": threshold,
                    "capacity_bound": bound,
                }),
                Err(e) => return Err(e.into()),
            };
            artifacts.add("sweep.csv", report::sweep_csv(&prov, &result));
            artifacts.add("transition.json", stamped_json(&prov, &transition));
        }
        Some(Experiment::Hysteresis { .. }) => {
            let result = hysteresis_sweep(&config)?;
            artifacts.add("sweep-up.csv", report::sweep_csv(&prov, &result.up));
            artifacts.add("sweep-down.csv", report::sweep_csv(&prov, &result.down));
            artifacts
                .add("hysteresis.json", stamped_json(&prov, &json!({ "capacity_bound": bound, "result": result })));
        }
        _ => unreachable!("sweep_config accepts sweep experiments only"),
    }
    artifacts.write(out)
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct NumDocument {
    problem: RateProblem,
    #[serde(default)]
    solver: SolverOptions,
    #[serde(default = "default_kkt_tolerance")]
    kkt_tolerance: f64,
}

fn default_kkt_tolerance() -> f64 {
    KKT_TOLERANCE
}

/// Accepts a bare rate problem or `{problem, solver, kkt_tolerance}`.
fn parse_num(text: &str) -> Result<NumDocument, CliError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::Validation(e.to_string()))?;
    let doc = if value.get("problem").is_some() {
        serde_json::from_str::<NumDocument>(text)
    } else {
        serde_json::from_str::<RateProblem>(text).map(|problem| NumDocument {
            problem,
            solver: SolverOptions::default(),
            kkt_tolerance: KKT_TOLERANCE,
        })
    };
    doc.map_err(|e| CliError::Validation(e.to_string()))
}

pub fn num(path: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let doc = parse_num(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    doc.problem.validate()?;
    let solution = solve_num(&doc.problem, &doc.solver)?;
    let kkt = verify_kkt(&doc.problem, &solution, doc.kkt_tolerance);
    let objective = doc.problem.objective(&solution.rates)?;
    let prov = Provenance {
        tool: TOOL.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        scenario_hash: content_hash(&doc.problem),
        seeds: Vec::new(),
    };
    let body = stamped_json(&prov, &json!({ "solution": solution, "objective": objective, "kkt": kkt }));
    print!("{body}");
    if let Some(dir) = out {
        let mut artifacts = Artifacts::new();
        artifacts.add("solution.json", body);
        artifacts.write(dir)?;
    }
    if kkt.passed {
        Ok(())
    } else {
        Err(CliError::NonConvergence(format!(
            "solution fails the optimality checks at tolerance {:e} ({} violations)",
            kkt.tolerance,
            kkt.violations.len()
        )))
    }
}

pub fn govern(path: &Path, out: &Path, seeds: Option<Vec<u64>>) -> Result<(), CliError> {
    let (scenario, prov) = load(path, seeds)?;
    let mut artifacts = Artifacts::new();
    if let Some(Experiment::Coupled { scenario: coupled }) = &scenario.experiment {
        let (off, on, comparison) = compare_coupled(coupled, scenario.horizon)?;
        artifacts.add("coupled-ungoverned.csv", report::coupled_csv(&prov, &off.n_series, &off.utility_series));
        artifacts.add("coupled-governed.csv", report::coupled_csv(&prov, &on.n_series, &on.utility_series));
        if let Some(trace) = &on.governance {
            artifacts.add("governance.csv", report::governance_csv(&prov, trace));
        }
        artifacts.add("comparison.json", stamped_json(&prov, &comparison));
        return artifacts.write(out);
    }

    if scenario.controllers.is_empty() {
        return Err(CliError::Validation("govern needs at least one controller".into()));
    }
    let setup = scenario.network()?;
    let spec = scenario.global_utility();
    let policy = scenario.trigger_policy();
    let mut runs = Vec::new();
    for &seed in &scenario.seeds {
        let plant = Plant {
            state: NetworkState::new(Topology::build(&setup.topology)?, setup.service_rate, seed),
            traffic: setup.traffic.clone(),
            routing: setup.routing,
        };
        let run = govern_loop(plant, &scenario.controllers, &spec, &policy, scenario.horizon)?;
        artifacts.add(format!("governance-{seed}.csv"), report::governance_csv(&prov, &run.governance));
        artifacts.add(format!("utility-{seed}.csv"), report::utility_csv(&prov, &run.utility_series));
        artifacts.add(format!("trace-{seed}.csv"), report::trace_csv(&prov, &run.trace));
        runs.push(json!({
            "seed": seed,
            "triggers": run.governance.entries.len(),
            "reconfigurations": run.governance.entries.iter().filter(|e| e.reconfigured).count(),
            "threshold_unmet": run.governance.entries.iter().filter(|e| e.threshold_unmet).count(),
            "fraction_meeting_threshold": run.fraction_meeting(spec.threshold),
            "final_configuration": run.governance.entries.last().map(|e| serde_json::from_str::<serde_json::Value>(&e.configuration.to_json()).expect("valid JSON")),
            "warnings": run.warnings,
        }));
    }
    let summary = json!({ "command": "govern", "threshold": spec.threshold, "runs": runs });
    artifacts.add("summary.json", stamped_json(&prov, &summary));
    artifacts.write(out)
}

pub fn pareto(path: &Path, out: &Path, seeds: Option<Vec<u64>>) -> Result<(), CliError> {
    let (scenario, prov) = load(path, seeds)?;
    let Some(Experiment::Pareto { objectives, budget }) = &scenario.experiment else {
        return Err(CliError::Validation("scenario experiment must be `pareto`".into()));
    };
    let space = JointSpace::new(&scenario.controllers)?;
    let objectives: Vec<String> = if objectives.is_empty() {
        space.controllers().iter().map(|c| c.id.clone()).collect()
    } else {
        objectives.clone()
    };
    let spec = scenario.global_utility();
    let evaluations: Vec<GovernanceEvaluation> = if space.size() > u128::from(*budget) {
        return Err(netgov_core::governance::GovError::Budget { size: space.size(), budget: *budget }.into());
    } else if space.controllers().iter().any(|c| c.actuates()) {
        let setup = scenario.network()?;
        let plant =
            Plant { state: setup.state(scenario.seeds[0])?, traffic: setup.traffic.clone(), routing: setup.routing };
        let mut evaluator = MeasuredEvaluator::new(plant, scenario.seeds[0], scenario.horizon);
        evaluate_space(&space, &mut evaluator, &spec, *budget, 0)?
    } else {
        let mut evaluator = StaticEvaluator { metrics: Default::default() };
        evaluate_space(&space, &mut evaluator, &spec, *budget, 0)?
    };
    let front_idx = pareto_indices(&evaluations, &objectives)?;
    let front: Vec<GovernanceEvaluation> = front_idx.iter().map(|&i| evaluations[i].clone()).collect();
    let mut artifacts = Artifacts::new();
    artifacts.add("evaluations.csv", report::pareto_csv(&prov, &objectives, &evaluations));
    artifacts.add("front.csv", report::pareto_csv(&prov, &objectives, &front));
    let summary = json!({
        "command": "pareto",
        "objectives": objectives,
        "space_size": evaluations.len(),
        "front_size": front.len(),
    });
    artifacts.add("pareto.json", stamped_json(&prov, &summary));
    artifacts.write(out)
}

pub fn calibrate(path: &Path, out: &Path, seeds: Option<Vec<u64>>) -> Result<(), CliError> {
    let (scenario, prov) = load(path, seeds)?;
    let Some(Experiment::Calibrate { controller, metric }) = &scenario.experiment else {
        return Err(CliError::Validation("scenario experiment must be `calibrate`".into()));
    };
    let spec = scenario.controllers.iter().find(|c| &c.id == controller).expect("validated");
    let model = calibrate_model(&scenario.network()?, spec, *metric, &scenario.seeds, scenario.horizon)?;
    let mut artifacts = Artifacts::new();
    artifacts.add(
        "calibration.json",
        stamped_json(&prov, &json!({ "controller": controller, "metric": metric, "model": model })),
    );
    artifacts.write(out)
}
