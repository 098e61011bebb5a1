//! Drift and stability metrics for tabular classifiers under sudden shocks.
//!
//! - [`drift`]: per-feature TV / KS distances and the mean distribution shift.
//! - [`stability`]: Stabilization Score (SS) and Stabilization Uplift (SU).
//! - [`split`]: out-of-time / out-of-sample shock splits and Monte Carlo runs.
//! - [`synth`]: covariance-matched body sampler with extreme-value tail outliers.
//! - [`calibrate`]: grid search for the uplift logistic slopes.
//! - [`model`]: a baseline logistic classifier, AUC and AUC table import.
//! - [`pipeline`]: the end-to-end A-model / B-model experiment and its reports.

pub mod calibrate;
pub mod drift;
pub mod error;
pub mod fixture;
pub mod frame;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod schema;
pub mod split;
pub mod stability;
pub mod synth;

pub use error::{Error, Result};
pub use frame::{load_csv, Column, ColumnData, ColumnKind, CsvOptions, TabularFrame};
pub use stability::{AucPoint, OutlierLevel, UpliftCoefficients};
