//! Experiments exhibiting congestion phase transitions and coupled-controller
//! oscillation, and the metrics that quantify them.

mod calibrate;
mod coupled;
mod oscillation;
mod sweep;

use thiserror::Error;

use crate::controllers::ControllerError;
use crate::governance::GovError;
use crate::net::NetError;

pub use calibrate::{calibrate, CalibrationMetric};
pub use coupled::{
    compare_coupled, run_coupled, CostCapScaler, CoupledComparison, CoupledRun, CoupledScenario, GovernanceMode,
    UtilizationScaler,
};
pub use oscillation::{oscillation_metrics, OscillationReport, MIN_OSCILLATION_WINDOW};
pub use sweep::{
    detect_transition, hysteresis_sweep, lambda_grid, phase_sweep, HysteresisResult, NetworkSetup, SweepConfig,
    SweepPoint, SweepResult, DEFAULT_TRANSITION_THRESHOLD,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error("sweep has {points} points; transition detection needs at least 4")]
    TooFewPoints { points: usize },
    #[error("no transition detected: the order parameter never crosses {threshold} from below")]
    NoTransition { threshold: f64 },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Governance(#[from] GovError),
}
