//! Estimation of real log canonical thresholds (learning coefficients) of
//! singular statistical models, and singular-BIC model selection built on
//! top of them.

pub mod error;
pub mod estimators;
pub mod model;
pub mod sampler;
pub mod sbic;
pub mod transform;
pub mod workflows;
pub mod zoo;

pub use error::{Error, Result};
pub use model::{Dataset, Lane, Model, RngPlan};
