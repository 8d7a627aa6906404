//! Discrete-time packet dynamics.
//!
//! Each tick runs, in order: Bernoulli injection at every node, FIFO service of
//! up to `service_rate` head-of-line packets per node, delivery accounting, and
//! ttl drops. Packets forwarded during a tick join the next hop's queue only
//! after every node has been served, so a packet moves at most one hop per tick.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::routing::{choose_next_hop, shortest_paths, RoutingPolicy, RoutingTable};
use super::topology::{NodeId, Topology};
use super::NetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub id: u64,
    pub source: NodeId,
    pub destination: NodeId,
    pub created_at: u64,
    pub hops: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DestinationPolicy {
    /// Every node injects; destinations uniform over the other nodes.
    Uniform,
    /// Only the listed `(source, destination)` pairs inject, each with probability λ.
    FixedPairs(Vec<(NodeId, NodeId)>),
}

/// Injection rate change taking effect at the start of `tick`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadStep {
    pub tick: u64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSpec {
    /// Per-node, per-tick injection probability.
    pub lambda: f64,
    #[serde(default = "default_destinations")]
    pub destinations: DestinationPolicy,
    /// Maximum hops before a packet is dropped; `None` disables drops.
    #[serde(default)]
    pub ttl: Option<u32>,
    #[serde(default)]
    pub load_steps: Vec<LoadStep>,
}

fn default_destinations() -> DestinationPolicy {
    DestinationPolicy::Uniform
}

impl TrafficSpec {
    pub fn uniform(lambda: f64) -> Self {
        TrafficSpec { lambda, destinations: DestinationPolicy::Uniform, ttl: None, load_steps: Vec::new() }
    }

    /// Injection probability in force at `tick` (the latest load step at or before it).
    pub fn lambda_at(&self, tick: u64) -> f64 {
        self.load_steps.iter().filter(|s| s.tick <= tick).max_by_key(|s| s.tick).map_or(self.lambda, |s| s.lambda)
    }

    pub fn validate(&self, nodes: usize) -> Result<(), NetError> {
        let check = |l: f64| {
            if (0.0..=1.0).contains(&l) {
                Ok(())
            } else {
                Err(NetError::Invalid(format!("lambda must lie in [0, 1], got {l}")))
            }
        };
        check(self.lambda)?;
        for step in &self.load_steps {
            check(step.lambda)?;
        }
        if let DestinationPolicy::FixedPairs(pairs) = &self.destinations {
            for &(s, d) in pairs {
                if s == d || s >= nodes || d >= nodes {
                    return Err(NetError::Invalid(format!("invalid traffic pair ({s}, {d})")));
                }
            }
        }
        if self.ttl == Some(0) {
            return Err(NetError::Invalid("ttl must be at least 1 hop".into()));
        }
        Ok(())
    }
}

/// Per-tick snapshot. Counters are cumulative since the start of the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub created: u64,
    pub delivered: u64,
    pub dropped: u64,
    /// Injections refused by admission control (never counted as created).
    pub blocked: u64,
    pub in_flight: u64,
    pub queue_total: u64,
    /// Packets delivered during this tick and the sum of their delays.
    pub delivered_now: u64,
    pub delay_sum_now: u64,
}

impl TickRecord {
    /// Mean delivery delay of packets delivered in this tick; 0 when none were.
    pub fn mean_delay(&self) -> f64 {
        if self.delivered_now == 0 {
            0.0
        } else {
            self.delay_sum_now as f64 / self.delivered_now as f64
        }
    }

    pub fn is_conserved(&self) -> bool {
        self.created == self.delivered + self.dropped + self.in_flight && self.in_flight == self.queue_total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub nodes: usize,
    pub service_rate: u32,
    pub seed: u64,
    /// Cumulative counters when the first record's tick began.
    #[serde(default)]
    pub initial: TickRecord,
    pub records: Vec<TickRecord>,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Cumulative counters just before record `index`.
    pub fn before(&self, index: usize) -> TickRecord {
        if index == 0 {
            self.initial
        } else {
            self.records[index - 1]
        }
    }
}

/// The simulated substrate: topology, queues, counters and the run's random stream.
#[derive(Debug, Clone)]
pub struct NetworkState {
    topology: Arc<Topology>,
    table: Arc<RoutingTable>,
    queues: Vec<VecDeque<Packet>>,
    tick: u64,
    next_packet_id: u64,
    created_total: u64,
    delivered_total: u64,
    dropped_total: u64,
    blocked_total: u64,
    service_rate: u32,
    /// Admission: a node refuses new packets once its queue holds this many. `None` admits all.
    admission_limit: Option<usize>,
    rng_seed: u64,
    rng: ChaCha8Rng,
}

impl NetworkState {
    pub fn new(topology: Topology, service_rate: u32, seed: u64) -> Self {
        let table = shortest_paths(&topology);
        let n = topology.node_count();
        NetworkState {
            topology: Arc::new(topology),
            table: Arc::new(table),
            queues: vec![VecDeque::new(); n],
            tick: 0,
            next_packet_id: 0,
            created_total: 0,
            delivered_total: 0,
            dropped_total: 0,
            blocked_total: 0,
            service_rate,
            admission_limit: None,
            rng_seed: seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn routing_table(&self) -> &RoutingTable {
        &self.table
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn service_rate(&self) -> u32 {
        self.service_rate
    }

    pub fn set_service_rate(&mut self, rate: u32) {
        self.service_rate = rate;
    }

    pub fn admission_limit(&self) -> Option<usize> {
        self.admission_limit
    }

    pub fn set_admission_limit(&mut self, limit: Option<usize>) {
        self.admission_limit = limit;
    }

    /// Restarts the random stream from `seed`, keeping queues and counters.
    pub fn reseed(&mut self, seed: u64) {
        self.rng_seed = seed;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn queue_len(&self, node: NodeId) -> usize {
        self.queues[node].len()
    }

    pub fn queue(&self, node: NodeId) -> impl Iterator<Item = &Packet> {
        self.queues[node].iter()
    }

    pub fn queue_total(&self) -> u64 {
        self.queues.iter().map(|q| q.len() as u64).sum()
    }

    pub fn created_total(&self) -> u64 {
        self.created_total
    }

    pub fn delivered_total(&self) -> u64 {
        self.delivered_total
    }

    pub fn dropped_total(&self) -> u64 {
        self.dropped_total
    }

    pub fn blocked_total(&self) -> u64 {
        self.blocked_total
    }

    pub fn in_flight(&self) -> u64 {
        self.created_total - self.delivered_total - self.dropped_total
    }

    pub fn is_conserved(&self) -> bool {
        self.created_total == self.delivered_total + self.dropped_total + self.queue_total()
    }

    fn inject(&mut self, source: NodeId, destination: NodeId) {
        if self.admission_limit.is_some_and(|limit| self.queues[source].len() >= limit) {
            self.blocked_total += 1;
            return;
        }
        let packet = Packet { id: self.next_packet_id, source, destination, created_at: self.tick, hops: 0 };
        self.next_packet_id += 1;
        self.created_total += 1;
        self.queues[source].push_back(packet);
    }

    /// Advances one tick and returns the resulting record.
    pub fn step(&mut self, traffic: &TrafficSpec, routing: &RoutingPolicy) -> TickRecord {
        let n = self.topology.node_count();
        let lambda = traffic.lambda_at(self.tick);

        match &traffic.destinations {
            DestinationPolicy::Uniform => {
                for node in 0..n {
                    if self.rng.gen::<f64>() < lambda {
                        // uniform over the n - 1 other nodes
                        let mut dest = self.rng.gen_range(0..n - 1);
                        if dest >= node {
                            dest += 1;
                        }
                        self.inject(node, dest);
                    }
                }
            }
            DestinationPolicy::FixedPairs(pairs) => {
                for &(s, d) in pairs {
                    if self.rng.gen::<f64>() < lambda {
                        self.inject(s, d);
                    }
                }
            }
        }

        let snapshot: Vec<usize> = self.queues.iter().map(VecDeque::len).collect();
        let mut link_use = vec![[0u32; 2]; self.topology.links().len()];
        let mut moves: Vec<(NodeId, Packet)> = Vec::new();
        let mut delivered_now = 0u64;
        let mut delay_sum_now = 0u64;

        for node in 0..n {
            let mut served = 0;
            while served < self.service_rate {
                let Some(head) = self.queues[node].front() else { break };
                let next =
                    choose_next_hop(routing, &self.topology, &self.table, node, head.destination, |v| snapshot[v]);
                let link = self.topology.link_between(node, next).expect("next hop is a neighbor");
                let dir = usize::from(node > next);
                if link_use[link][dir] >= self.topology.links()[link].capacity {
                    // head-of-line blocked for the rest of this tick
                    break;
                }
                link_use[link][dir] += 1;
                let mut packet = self.queues[node].pop_front().expect("head exists");
                packet.hops += 1;
                served += 1;
                if next == packet.destination {
                    self.delivered_total += 1;
                    delivered_now += 1;
                    delay_sum_now += self.tick - packet.created_at + 1;
                } else if traffic.ttl.is_some_and(|ttl| packet.hops >= ttl) {
                    self.dropped_total += 1;
                } else {
                    moves.push((next, packet));
                }
            }
        }
        for (node, packet) in moves {
            self.queues[node].push_back(packet);
        }

        let record = TickRecord {
            tick: self.tick,
            created: self.created_total,
            delivered: self.delivered_total,
            dropped: self.dropped_total,
            blocked: self.blocked_total,
            in_flight: self.in_flight(),
            queue_total: self.queue_total(),
            delivered_now,
            delay_sum_now,
        };
        self.tick += 1;
        record
    }

    /// Cumulative counters as of now, with no per-tick activity.
    pub fn snapshot(&self) -> TickRecord {
        TickRecord {
            tick: self.tick,
            created: self.created_total(),
            delivered: self.delivered_total(),
            dropped: self.dropped_total(),
            blocked: self.blocked_total(),
            in_flight: self.in_flight(),
            queue_total: self.queue_total(),
            delivered_now: 0,
            delay_sum_now: 0,
        }
    }

    /// Runs `ticks` steps, checking packet conservation after each one.
    pub fn run(
        &mut self,
        traffic: &TrafficSpec,
        routing: &RoutingPolicy,
        ticks: u64,
    ) -> Result<SimulationTrace, NetError> {
        if ticks == 0 {
            return Err(NetError::Invalid("run needs at least one tick".into()));
        }
        let initial = self.snapshot();
        let mut records = Vec::with_capacity(ticks as usize);
        for _ in 0..ticks {
            let record = self.step(traffic, routing);
            if !record.is_conserved() {
                return Err(NetError::Conservation { tick: record.tick });
            }
            records.push(record);
        }
        Ok(SimulationTrace {
            nodes: self.topology.node_count(),
            service_rate: self.service_rate,
            seed: self.rng_seed,
            initial,
            records,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(n: usize, seed: u64) -> NetworkState {
        NetworkState::new(Topology::ring(n, 1).unwrap(), 1, seed)
    }

    #[test]
    fn continued_run_measures_from_its_own_start() {
        let mut state = ring(16, 4);
        let traffic = TrafficSpec::uniform(0.2);
        let routing = RoutingPolicy::static_shortest_path();
        let first = state.run(&traffic, &routing, 300).unwrap();
        let second = state.run(&traffic, &routing, 300).unwrap();
        assert_eq!(
            second.initial,
            TickRecord { delivered_now: 0, delay_sum_now: 0, tick: 300, ..*first.records.last().unwrap() }
        );
        assert_eq!(second.before(0).created, first.records[299].created);
    }

    #[test]
    fn no_injection_keeps_queues_empty() {
        let mut s = ring(8, 1);
        let trace = s.run(&TrafficSpec::uniform(0.0), &RoutingPolicy::static_shortest_path(), 10).unwrap();
        assert_eq!(trace.len(), 10);
        for (i, r) in trace.records.iter().enumerate() {
            assert_eq!(*r, TickRecord { tick: i as u64, ..TickRecord::default() });
        }
    }

    #[test]
    fn two_node_service_matches_arrival() {
        let mut s = NetworkState::new(Topology::ring(2, 1).unwrap(), 1, 3);
        let traffic = TrafficSpec {
            lambda: 1.0,
            destinations: DestinationPolicy::FixedPairs(vec![(0, 1)]),
            ttl: None,
            load_steps: vec![],
        };
        let trace = s.run(&traffic, &RoutingPolicy::static_shortest_path(), 200).unwrap();
        for r in &trace.records {
            assert!(r.queue_total <= 1);
            assert_eq!(r.delivered_now, 1);
            assert_eq!(r.delivered, r.created);
            assert_eq!(r.mean_delay(), 1.0);
        }
    }

    #[test]
    fn ttl_drops_are_counted() {
        let mut s = ring(16, 5);
        let traffic = TrafficSpec { ttl: Some(2), ..TrafficSpec::uniform(0.2) };
        let trace = s.run(&traffic, &RoutingPolicy::static_shortest_path(), 500).unwrap();
        let last = trace.records.last().unwrap();
        assert!(last.dropped > 0);
        assert!(trace.records.iter().all(TickRecord::is_conserved));
    }

    #[test]
    fn admission_limit_blocks_injection() {
        let mut s = ring(16, 5);
        s.set_admission_limit(Some(0));
        let trace = s.run(&TrafficSpec::uniform(0.5), &RoutingPolicy::static_shortest_path(), 100).unwrap();
        let last = trace.records.last().unwrap();
        assert_eq!(last.created, 0);
        assert!(last.blocked > 0);
    }

    #[test]
    fn load_steps_switch_lambda() {
        let t = TrafficSpec {
            load_steps: vec![LoadStep { tick: 10, lambda: 0.4 }, LoadStep { tick: 5, lambda: 0.3 }],
            ..TrafficSpec::uniform(0.1)
        };
        assert_eq!(t.lambda_at(0), 0.1);
        assert_eq!(t.lambda_at(7), 0.3);
        assert_eq!(t.lambda_at(10), 0.4);
    }

    #[test]
    fn hops_never_decrease_and_stay_below_ring_diameter() {
        let mut s = ring(16, 9);
        let traffic = TrafficSpec::uniform(0.1);
        let policy = RoutingPolicy::static_shortest_path();
        let mut last_hops = std::collections::HashMap::new();
        for _ in 0..300 {
            s.step(&traffic, &policy);
            for node in 0..16 {
                for p in s.queue(node) {
                    let prev = last_hops.insert(p.id, p.hops).unwrap_or(0);
                    assert!(p.hops >= prev);
                    assert!(p.hops < 8);
                    assert_ne!(p.source, p.destination);
                }
            }
        }
    }
}
