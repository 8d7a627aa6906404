//! Undirected network topologies: rings, square lattices and seeded random graphs.

use std::collections::{BTreeSet, VecDeque};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::NetError;

pub type NodeId = usize;

/// Number of re-draws attempted before a disconnected random graph is reported.
pub const RANDOM_RETRY_BUDGET: u32 = 100;

/// A construction request for a topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySpec {
    Ring {
        nodes: usize,
        #[serde(default = "default_capacity")]
        link_capacity: u32,
    },
    Lattice {
        side: usize,
        #[serde(default = "default_capacity")]
        link_capacity: u32,
    },
    Random {
        nodes: usize,
        edge_probability: f64,
        seed: u64,
        #[serde(default = "default_capacity")]
        link_capacity: u32,
    },
}

fn default_capacity() -> u32 {
    1
}

impl TopologySpec {
    /// Number of nodes the built topology will have.
    pub fn nodes(&self) -> usize {
        match *self {
            TopologySpec::Ring { nodes, .. } | TopologySpec::Random { nodes, .. } => nodes,
            TopologySpec::Lattice { side, .. } => side * side,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub a: NodeId,
    pub b: NodeId,
    /// Packets per tick in each direction.
    pub capacity: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologyKind {
    Ring,
    Lattice { side: usize },
    Random { edge_probability: f64, seed: u64 },
}

/// A connected, simple, undirected graph with integer link capacities.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    kind: TopologyKind,
    nodes: usize,
    links: Vec<Link>,
    // Sorted neighbor lists; `(neighbor, link index)`.
    adjacency: Vec<Vec<(NodeId, usize)>>,
}

impl Topology {
    /// Builds a topology from an explicit link list, validating every structural invariant.
    pub fn from_links(kind: TopologyKind, nodes: usize, links: Vec<Link>) -> Result<Self, NetError> {
        if nodes < 2 {
            return Err(NetError::Invalid(format!("topology needs at least 2 nodes, got {nodes}")));
        }
        let mut seen = BTreeSet::new();
        let mut adjacency = vec![Vec::new(); nodes];
        for (idx, link) in links.iter().enumerate() {
            if link.a >= nodes || link.b >= nodes {
                return Err(NetError::Invalid(format!(
                    "link ({}, {}) references a node outside 0..{nodes}",
                    link.a, link.b
                )));
            }
            if link.a == link.b {
                return Err(NetError::Invalid(format!("self-loop at node {}", link.a)));
            }
            if link.capacity == 0 {
                return Err(NetError::Invalid(format!("link ({}, {}) has zero capacity", link.a, link.b)));
            }
            let key = (link.a.min(link.b), link.a.max(link.b));
            if !seen.insert(key) {
                return Err(NetError::Invalid(format!("duplicate link {key:?}")));
            }
            adjacency[link.a].push((link.b, idx));
            adjacency[link.b].push((link.a, idx));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let topo = Topology { kind, nodes, links, adjacency };
        if !topo.is_connected() {
            return Err(NetError::Disconnected);
        }
        Ok(topo)
    }

    pub fn ring(nodes: usize, link_capacity: u32) -> Result<Self, NetError> {
        if nodes < 3 {
            // A 2-ring would duplicate its only link.
            if nodes == 2 {
                return Self::from_links(TopologyKind::Ring, 2, vec![Link { a: 0, b: 1, capacity: link_capacity }]);
            }
            return Err(NetError::Invalid(format!("ring needs at least 2 nodes, got {nodes}")));
        }
        let links = (0..nodes).map(|i| Link { a: i, b: (i + 1) % nodes, capacity: link_capacity }).collect();
        Self::from_links(TopologyKind::Ring, nodes, links)
    }

    /// Square `side × side` grid without wraparound; node id is `row * side + col`.
    pub fn lattice(side: usize, link_capacity: u32) -> Result<Self, NetError> {
        if side < 2 {
            return Err(NetError::Invalid(format!("lattice side must be at least 2, got {side}")));
        }
        let mut links = Vec::with_capacity(2 * side * (side - 1));
        for row in 0..side {
            for col in 0..side {
                let id = row * side + col;
                if col + 1 < side {
                    links.push(Link { a: id, b: id + 1, capacity: link_capacity });
                }
                if row + 1 < side {
                    links.push(Link { a: id, b: id + side, capacity: link_capacity });
                }
            }
        }
        Self::from_links(TopologyKind::Lattice { side }, side * side, links)
    }

    /// Erdős–Rényi graph. Disconnected draws are retried with the next seed
    /// (`seed + attempt`) up to [`RANDOM_RETRY_BUDGET`] times.
    pub fn random(nodes: usize, edge_probability: f64, seed: u64, link_capacity: u32) -> Result<Self, NetError> {
        if nodes < 2 {
            return Err(NetError::Invalid(format!("random graph needs at least 2 nodes, got {nodes}")));
        }
        if !(edge_probability > 0.0 && edge_probability <= 1.0) {
            return Err(NetError::Invalid(format!("edge probability must lie in (0, 1], got {edge_probability}")));
        }
        for attempt in 0..RANDOM_RETRY_BUDGET {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt as u64));
            let mut links = Vec::new();
            for a in 0..nodes {
                for b in a + 1..nodes {
                    if rng.gen::<f64>() < edge_probability {
                        links.push(Link { a, b, capacity: link_capacity });
                    }
                }
            }
            match Self::from_links(TopologyKind::Random { edge_probability, seed }, nodes, links) {
                Ok(topo) => return Ok(topo),
                Err(NetError::Disconnected) => continue,
                Err(other) => return Err(other),
            }
        }
        Err(NetError::Construction(format!(
            "random graph (n={nodes}, p={edge_probability}, seed={seed}) stayed disconnected after {RANDOM_RETRY_BUDGET} draws"
        )))
    }

    pub fn build(spec: &TopologySpec) -> Result<Self, NetError> {
        match *spec {
            TopologySpec::Ring { nodes, link_capacity } => Self::ring(nodes, link_capacity),
            TopologySpec::Lattice { side, link_capacity } => Self::lattice(side, link_capacity),
            TopologySpec::Random { nodes, edge_probability, seed, link_capacity } => {
                Self::random(nodes, edge_probability, seed, link_capacity)
            }
        }
    }

    pub fn kind(&self) -> &TopologyKind {
        &self.kind
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    /// Sorted neighbors of `node` together with the index of the connecting link.
    pub fn neighbors(&self, node: NodeId) -> &[(NodeId, usize)] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.adjacency[node].len()
    }

    /// Undirected link index between two adjacent nodes.
    pub fn link_between(&self, a: NodeId, b: NodeId) -> Option<usize> {
        self.adjacency[a].binary_search_by_key(&b, |&(n, _)| n).ok().map(|pos| self.adjacency[a][pos].1)
    }

    /// Hop distances from `source` to every node.
    pub fn bfs_distances(&self, source: NodeId) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.nodes];
        let mut queue = VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.adjacency[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    fn is_connected(&self) -> bool {
        self.bfs_distances(0).iter().all(|&d| d != usize::MAX)
    }

    /// Mean hop distance over ordered pairs of distinct nodes.
    pub fn mean_shortest_path_length(&self) -> f64 {
        let n = self.nodes;
        let total: usize = (0..n).map(|s| self.bfs_distances(s).iter().sum::<usize>()).sum();
        total as f64 / (n * (n - 1)) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_of_four() {
        let t = Topology::ring(4, 1).unwrap();
        assert_eq!(t.node_count(), 4);
        assert_eq!(t.links().len(), 4);
        assert!((0..4).all(|n| t.degree(n) == 2));
    }

    #[test]
    fn lattice_side_three() {
        let t = Topology::lattice(3, 1).unwrap();
        assert_eq!(t.node_count(), 9);
        assert_eq!(t.links().len(), 12);
    }

    #[test]
    fn random_is_deterministic() {
        let a = Topology::random(16, 0.3, 7, 1).unwrap();
        let b = Topology::random(16, 0.3, 7, 1).unwrap();
        assert_eq!(a.links(), b.links());
    }

    #[test]
    fn sparse_random_exhausts_retry_budget() {
        let err = Topology::random(40, 0.01, 3, 1).unwrap_err();
        assert!(matches!(err, NetError::Construction(_)));
    }

    #[test]
    fn rejects_bad_links() {
        let self_loop = vec![Link { a: 0, b: 0, capacity: 1 }, Link { a: 0, b: 1, capacity: 1 }];
        assert!(Topology::from_links(TopologyKind::Ring, 2, self_loop).is_err());
        let dup = vec![Link { a: 0, b: 1, capacity: 1 }, Link { a: 1, b: 0, capacity: 1 }];
        assert!(Topology::from_links(TopologyKind::Ring, 2, dup).is_err());
        let zero = vec![Link { a: 0, b: 1, capacity: 0 }];
        assert!(Topology::from_links(TopologyKind::Ring, 2, zero).is_err());
        let split = vec![Link { a: 0, b: 1, capacity: 1 }, Link { a: 2, b: 3, capacity: 1 }];
        assert!(matches!(Topology::from_links(TopologyKind::Ring, 4, split), Err(NetError::Disconnected)));
        assert!(Topology::ring(1, 1).is_err());
        assert!(Topology::lattice(1, 1).is_err());
        assert!(Topology::random(8, 0.0, 1, 1).is_err());
    }

    #[test]
    fn ring16_mean_path_length() {
        let t = Topology::ring(16, 1).unwrap();
        assert!((t.mean_shortest_path_length() - 64.0 / 15.0).abs() < 1e-12);
    }
}
