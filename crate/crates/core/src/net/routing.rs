//! Next-hop selection: static shortest paths plus two queue-sensitive variants.

use serde::{Deserialize, Serialize};

use super::topology::{NodeId, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingKind {
    StaticShortestPath,
    QueueAwareShortestPath,
    LocalGreedy,
}

impl RoutingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RoutingKind::StaticShortestPath => "static_shortest_path",
            RoutingKind::QueueAwareShortestPath => "queue_aware_shortest_path",
            RoutingKind::LocalGreedy => "local_greedy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingPolicy {
    pub kind: RoutingKind,
    /// Cost per queued packet at the candidate next hop (queue-aware only).
    #[serde(default = "default_queue_weight")]
    pub queue_weight: f64,
}

pub fn default_queue_weight() -> f64 {
    0.1
}

impl RoutingPolicy {
    pub fn static_shortest_path() -> Self {
        RoutingPolicy { kind: RoutingKind::StaticShortestPath, queue_weight: default_queue_weight() }
    }

    pub fn queue_aware(queue_weight: f64) -> Self {
        RoutingPolicy { kind: RoutingKind::QueueAwareShortestPath, queue_weight }
    }

    pub fn local_greedy() -> Self {
        RoutingPolicy { kind: RoutingKind::LocalGreedy, queue_weight: default_queue_weight() }
    }
}

/// All-pairs hop distances and minimum-hop next hops, computed once per topology.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingTable {
    nodes: usize,
    dist: Vec<usize>,
    next: Vec<NodeId>,
}

impl RoutingTable {
    pub fn distance(&self, from: NodeId, to: NodeId) -> usize {
        self.dist[from * self.nodes + to]
    }

    /// Minimum-hop next hop, ties broken by lowest neighbor id. `next_hop(d, d) == d`.
    pub fn next_hop(&self, from: NodeId, to: NodeId) -> NodeId {
        self.next[from * self.nodes + to]
    }
}

/// Builds the static routing table by one BFS per destination.
pub fn shortest_paths(topology: &Topology) -> RoutingTable {
    let n = topology.node_count();
    let mut dist = vec![0usize; n * n];
    for s in 0..n {
        let row = topology.bfs_distances(s);
        dist[s * n..(s + 1) * n].copy_from_slice(&row);
    }
    let mut next = vec![0usize; n * n];
    for from in 0..n {
        for to in 0..n {
            next[from * n + to] = if from == to {
                to
            } else {
                // neighbor lists are sorted, so the first match is the lowest id
                topology
                    .neighbors(from)
                    .iter()
                    .map(|&(v, _)| v)
                    .find(|&v| dist[v * n + to] + 1 == dist[from * n + to])
                    .expect("connected topology always has a closer neighbor")
            };
        }
    }
    RoutingTable { nodes: n, dist, next }
}

/// Picks the next hop for a packet at `at` headed to `dest`.
///
/// `queue_len` reports current queue lengths; the static policy never reads it.
pub fn choose_next_hop(
    policy: &RoutingPolicy,
    topology: &Topology,
    table: &RoutingTable,
    at: NodeId,
    dest: NodeId,
    queue_len: impl Fn(NodeId) -> usize,
) -> NodeId {
    debug_assert_ne!(at, dest);
    match policy.kind {
        RoutingKind::StaticShortestPath => table.next_hop(at, dest),
        RoutingKind::QueueAwareShortestPath => {
            let mut best = None::<(f64, NodeId)>;
            for &(v, _) in topology.neighbors(at) {
                // packets reaching their destination never queue there
                let backlog = if v == dest { 0.0 } else { queue_len(v) as f64 };
                let cost = 1.0 + table.distance(v, dest) as f64 + policy.queue_weight * backlog;
                if best.is_none_or(|(c, _)| cost < c) {
                    best = Some((cost, v));
                }
            }
            best.expect("nodes in a connected topology have neighbors").1
        }
        RoutingKind::LocalGreedy => {
            let here = table.distance(at, dest);
            let mut best = None::<(usize, NodeId)>;
            for &(v, _) in topology.neighbors(at) {
                if v == dest {
                    return v;
                }
                if table.distance(v, dest) < here {
                    let q = queue_len(v);
                    if best.is_none_or(|(bq, _)| q < bq) {
                        best = Some((q, v));
                    }
                }
            }
            best.expect("connected topology always has a closer neighbor").1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_of_four_next_hops() {
        let t = Topology::ring(4, 1).unwrap();
        let table = shortest_paths(&t);
        assert_eq!(table.next_hop(0, 1), 1);
        assert_eq!(table.distance(0, 1), 1);
        assert_eq!(table.next_hop(0, 2), 1);
        assert_eq!(table.distance(0, 2), 2);
        assert_eq!(table.next_hop(0, 3), 3);
    }

    #[test]
    fn lattice_corner_to_corner() {
        let t = Topology::lattice(3, 1).unwrap();
        let table = shortest_paths(&t);
        assert_eq!(table.distance(0, 8), 4);
        assert_eq!(table.next_hop(0, 8), 1);
    }

    #[test]
    fn queue_aware_avoids_backlog_on_ties() {
        let t = Topology::ring(4, 1).unwrap();
        let table = shortest_paths(&t);
        let policy = RoutingPolicy::queue_aware(1.0);
        let q = |v: NodeId| if v == 1 { 5 } else { 0 };
        assert_eq!(choose_next_hop(&policy, &t, &table, 0, 2, q), 3);
        assert_eq!(choose_next_hop(&policy, &t, &table, 0, 2, |_| 0), 1);
        // direct delivery ignores the destination's own queue
        assert_eq!(choose_next_hop(&policy, &t, &table, 0, 1, q), 1);
    }

    #[test]
    fn local_greedy_prefers_short_queue_among_closer_neighbors() {
        let t = Topology::lattice(3, 1).unwrap();
        let table = shortest_paths(&t);
        let policy = RoutingPolicy::local_greedy();
        // from 0 to 8 both 1 and 3 are closer
        assert_eq!(choose_next_hop(&policy, &t, &table, 0, 8, |v| if v == 1 { 4 } else { 1 }), 3);
        assert_eq!(choose_next_hop(&policy, &t, &table, 0, 8, |_| 0), 1);
    }
}
