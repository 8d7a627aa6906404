//! Global utility, joint configuration search, Pareto analysis and the
//! reconfiguration loop.

mod aggregate;
mod control_loop;
mod pareto;
mod search;
mod space;

use thiserror::Error;

use crate::controllers::ControllerError;
use crate::net::NetError;

pub use aggregate::{aggregate, Aggregator, GlobalUtilitySpec};
pub use control_loop::{
    govern_loop, GovernanceEntry, GovernanceTrace, GovernedRun, MeasuredEvaluator, Plant, TriggerPolicy, TriggerReason,
};
pub use pareto::{dominates, objective_matrix, pareto_front, pareto_indices};
pub use search::{
    evaluate_space, search, Evaluator, SearchOutcome, StaticEvaluator, Strategy, AUTO_EXHAUSTIVE_LIMIT,
    DEFAULT_EXHAUSTIVE_BUDGET,
};
pub use space::{ConfigurationVector, GovernanceEvaluation, JointSpace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GovError {
    #[error("invalid governance input: {0}")]
    Invalid(String),
    #[error("global utility undefined: {0}")]
    Domain(String),
    #[error("joint space of {size} configurations exceeds the exhaustive budget of {budget}")]
    Budget { size: u128, budget: u64 },
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Net(#[from] NetError),
}
