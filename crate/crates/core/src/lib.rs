//! Measure how much hyperparameter choices change a classifier's
//! predictions.
//!
//! The pipeline: load a dataset ([`dataset`]), draw configurations from a
//! model's search space ([`space`]), train every configuration on a
//! shared training split ([`learners`], [`sweep`]), then compare each
//! configuration's evaluation-split labels with those of the default
//! configuration ([`metrics`]) and summarize across datasets
//! ([`reports`]). Externally produced predictions enter through the
//! tab-separated interchange format in [`interchange`].

pub mod dataset;
pub mod error;
pub mod interchange;
pub mod learners;
pub mod metrics;
pub mod reports;
pub mod seed;
pub mod space;
pub mod sweep;

pub use dataset::{load_csv, split, Dataset, Impute, LoadOptions, SplitPair, TargetColumn};
pub use error::{Error, Result};
pub use interchange::{export_predictions, import_predictions};
pub use learners::{train, FittedModel, ModelKind};
pub use metrics::{
    aggregate, discrepancy, f1, joint_discrepancy, marginal_discrepancy, model_discrepancy,
    tunability, AggregateStat, DiscrepancyResult, Entry, PredictionSet, Scope, TunabilityResult,
};
pub use reports::{bivariate_grid, region_cells, summary_table, Report};
pub use space::{
    marginal_grid, pairwise_grid, sample_full, space_for, space_for_dims, Config, HyperparamSpace,
    ParamSpec,
};
pub use sweep::{run_sweep, EvalOn, SweepOutcome};
