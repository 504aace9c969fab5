//! Next-day peak forecasting with one-hidden-layer perceptrons.
//!
//! The crate covers the whole statistical chain behind a threshold-exceedance
//! forecaster:
//!
//! - [`dataset`]: CSV ingestion, hourly class-frequency encoding of
//!   categorical weather forecasts, standardization and rebalancing of rare
//!   exceedance days.
//! - [`mlp`]: the tanh perceptron, its analytic Jacobian and
//!   Levenberg-Marquardt training with deterministic parallel restarts.
//! - [`pruning`]: the penalized log-MSE criterion, stepwise weight
//!   elimination and hidden-layer size selection.
//! - [`uncertainty`]: leverages and confidence intervals built from the
//!   output gradients.
//! - [`classifier`]: the sigmoid-output network read as an exceedance
//!   probability.
//! - [`baselines`]: persistence, least squares, ridge and stepwise logistic
//!   regression.
//! - [`metrics`]: global fit indices, the RMSE decomposition, the agreement
//!   index and contingency-table skill scores.
//!
//! [`synth`] generates seasons of synthetic data with the same layout as the
//! real inputs, and [`model_file`] holds the on-disk model format.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod classifier;
pub mod dataset;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod mlp;
pub mod model_file;
pub mod pruning;
pub mod rng;
pub mod synth;
pub mod uncertainty;

pub use baselines::{LinearModel, LogisticModel};
pub use classifier::{ExceedanceTargets, ProbabilityForecast, TargetMode};
pub use dataset::{BalanceSpec, FeatureTable, RawRecord, Schema};
pub use error::{Error, Result};
pub use metrics::{ContingencyTable, ExceedanceScores, FitReport};
pub use mlp::{Network, OutputKind, TrainConfig};
pub use pruning::{BicValue, PruneTrace};
pub use uncertainty::{IntervalContext, LeverageSet, PredictionInterval};
