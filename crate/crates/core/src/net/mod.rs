//! Deterministic discrete-time packet network.

mod order;
mod routing;
mod sim;
mod topology;

use thiserror::Error;

pub use order::{order_parameter, MIN_ORDER_WINDOW};
pub use routing::{choose_next_hop, shortest_paths, RoutingKind, RoutingPolicy, RoutingTable};
pub use sim::{DestinationPolicy, LoadStep, NetworkState, Packet, SimulationTrace, TickRecord, TrafficSpec};
pub use topology::{Link, NodeId, Topology, TopologyKind, TopologySpec, RANDOM_RETRY_BUDGET};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("invalid network parameter: {0}")]
    Invalid(String),
    #[error("topology is disconnected")]
    Disconnected,
    #[error("topology construction failed: {0}")]
    Construction(String),
    #[error("packet conservation violated at tick {tick}")]
    Conservation { tick: u64 },
    #[error("order parameter undefined: no packets created in window")]
    UndefinedOrderParameter,
}

/// Saturation bound on the per-node injection rate under uniform traffic:
/// service rate divided by the mean shortest-path length.
pub fn capacity_bound(topology: &Topology, service_rate: u32) -> f64 {
    f64::from(service_rate) / topology.mean_shortest_path_length()
}
