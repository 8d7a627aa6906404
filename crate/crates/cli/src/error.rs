use std::fmt;

use netgov_core::controllers::ControllerError;
use netgov_core::governance::GovError;
use netgov_core::lab::LabError;
use netgov_core::net::NetError;
use netgov_core::num::NumError;
use netgov_core::scenario::ScenarioError;

/// A failed command and its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Malformed or inconsistent input (exit 2).
    Validation(String),
    /// An internal invariant such as packet conservation broke (exit 3).
    Invariant(String),
    /// The rate solver did not reach an optimal allocation (exit 4).
    NonConvergence(String),
    /// The joint configuration space exceeds the exhaustive budget (exit 5).
    Budget(String),
    /// Reading input or writing artifacts failed (exit 1).
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Invariant(_) => 3,
            CliError::NonConvergence(_) => 4,
            CliError::Budget(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Invariant(m) => write!(f, "internal invariant violated: {m}"),
            CliError::NonConvergence(m) => write!(f, "solver did not converge: {m}"),
            CliError::Budget(m) => write!(f, "{m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::Conservation { .. } | NetError::UndefinedOrderParameter => CliError::Invariant(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<NumError> for CliError {
    fn from(e: NumError) -> Self {
        match e {
            NumError::NonConvergence { .. } => CliError::NonConvergence(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ControllerError> for CliError {
    fn from(e: ControllerError) -> Self {
        match e {
            ControllerError::Num(inner) => inner.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<GovError> for CliError {
    fn from(e: GovError) -> Self {
        match e {
            GovError::Budget { size, budget } => CliError::Budget(format!(
                "joint space has {size} configurations, over the exhaustive budget of {budget}; reduce the controller grids"
            )),
            GovError::Controller(inner) => inner.into(),
            GovError::Net(inner) => inner.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        match e {
            LabError::Net(inner) => inner.into(),
            LabError::Controller(inner) => inner.into(),
            LabError::Governance(inner) => inner.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
