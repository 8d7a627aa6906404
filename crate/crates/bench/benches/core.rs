use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use netgov_core::controllers::{ControllerSpec, Metrics, PerformanceModel, ResourceGrid};
use netgov_core::governance::{search, GlobalUtilitySpec, JointSpace, StaticEvaluator, Strategy};
use netgov_core::net::{NetworkState, RoutingPolicy, Topology, TrafficSpec};
use netgov_core::num::{solve_num, RateProblem, SolverOptions, UtilitySpec};

fn ring_state(seed: u64) -> NetworkState {
    NetworkState::new(Topology::ring(16, 1).unwrap(), 1, seed)
}

fn network(c: &mut Criterion) {
    let traffic = TrafficSpec::uniform(0.2);
    let routing = RoutingPolicy::static_shortest_path();
    c.bench_function("step_ring16", |b| {
        b.iter_batched_ref(|| ring_state(1), |state| black_box(state.step(&traffic, &routing)), BatchSize::SmallInput)
    });
    c.bench_function("run_ring16_1000_ticks", |b| {
        b.iter_batched(
            || ring_state(1),
            |mut state| black_box(state.run(&traffic, &routing, 1000).unwrap()),
            BatchSize::SmallInput,
        )
    });
    let aware = RoutingPolicy::queue_aware(0.1);
    c.bench_function("run_ring16_queue_aware_1000_ticks", |b| {
        b.iter_batched(
            || ring_state(1),
            |mut state| black_box(state.run(&traffic, &aware, 1000).unwrap()),
            BatchSize::SmallInput,
        )
    });
}

fn rate_allocation(c: &mut Criterion) {
    let line = RateProblem {
        routes: vec![vec![0, 1], vec![0], vec![1]],
        capacities: vec![1.0, 1.0],
        utilities: vec![UtilitySpec::log(1.0); 3],
    };
    c.bench_function("solve_num_line", |b| b.iter(|| solve_num(black_box(&line), &SolverOptions::default()).unwrap()));

    let links = 8;
    let chain = RateProblem {
        routes: std::iter::once((0..links).collect()).chain((0..links).map(|l| vec![l])).collect(),
        capacities: (0..links).map(|l| 1.0 + l as f64 * 0.25).collect(),
        utilities: (0..=links).map(|s| UtilitySpec::alpha_fair(1.0 + s as f64 * 0.1, 2.0)).collect(),
    };
    c.bench_function("solve_num_chain8_alpha2", |b| {
        b.iter(|| solve_num(black_box(&chain), &SolverOptions::default()).unwrap())
    });
}

fn governance(c: &mut Criterion) {
    let tradeoff = JointSpace::new(&[
        ControllerSpec::throughput(
            "tp",
            ResourceGrid::Range { min: 0, max: 50 },
            PerformanceModel::default_throughput(),
        ),
        ControllerSpec::shared_cost("cost", "tp", PerformanceModel::default_cost()),
    ])
    .unwrap();
    let spec = GlobalUtilitySpec::weighted_sum();
    let mut evaluator = StaticEvaluator { metrics: Metrics::default() };
    c.bench_function("search_tradeoff_exhaustive", |b| {
        b.iter(|| search(&tradeoff, &mut evaluator, &spec, Strategy::exhaustive(), None, 0).unwrap())
    });

    let wide: Vec<ControllerSpec> = (0..4)
        .map(|i| {
            ControllerSpec::throughput(
                &format!("tp{i}"),
                ResourceGrid::Range { min: 0, max: 9 },
                PerformanceModel::SaturatingThroughput { t_max: 10.0 + i as f64, beta: 0.2 },
            )
        })
        .collect();
    let wide = JointSpace::new(&wide).unwrap();
    for (name, strategy) in [
        ("search_10k_exhaustive", Strategy::exhaustive()),
        ("search_10k_coordinate_descent", Strategy::CoordinateDescent),
        ("search_10k_hill_climb", Strategy::HillClimb { restarts: 4, seed: 1 }),
    ] {
        c.bench_function(name, |b| b.iter(|| search(&wide, &mut evaluator, &spec, strategy, None, 0).unwrap()));
    }
}

criterion_group!(benches, network, rate_allocation, governance);
criterion_main!(benches);
