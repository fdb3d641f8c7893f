//! Flood forecasting for sensor networks.
//!
//! Robust regression of river level on its driving parameters, quadratic
//! trend extrapolation toward the flood line, an adaptive sampling schedule,
//! and a discrete-event simulator of the sensor network that runs it all.

use std::fmt;

use serde::{Deserialize, Serialize};

mod linalg;
pub mod predictor;
pub mod regression;
pub mod scheduler;
pub mod simnet;
pub mod synthetic;
pub mod trend;

pub use predictor::{
    weighted_rms_error, PredictionOutput, Predictor, PredictorConfig, PredictorError, Reading,
};
pub use regression::{
    merge_coefficients, robust_fit, weighted_least_squares, Coefficients, DesignMatrix,
    RegressionError, RobustFitConfig, RobustFitResult, WeightFunction, WeightVector,
};
pub use scheduler::{recalibrate, time_multiplier, TimeSet, Trigger, TriggerKind, TriggerQueue};
pub use trend::{detect_rising_segment, predict_crossing, quadratic_fit, LevelSeries, QuadraticModel};

/// Identifier of a node in the sensor network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}
