//! Loss functions, calibration penalties, metrics and ensembles for
//! imbalanced multi-class classification, plus segmentation-mask utilities
//! and a small deterministic network used to exercise them end to end.

pub mod ensemble;
pub mod error;
pub mod loss;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod prob;
pub mod rng;
pub mod run;
pub mod seg;

pub use error::{Error, Result};
pub use loss::{LossFamily, LossReport, LossSpec};
pub use matrix::Matrix;
pub use prob::{BatchCalibrationStats, ClassDistribution, PredictionMatrix, TargetMatrix};
