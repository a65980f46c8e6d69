//! Fixed-effect regressions, clustered inference and the model-validation
//! regressions built on predicted price changes.

mod fixed_effects;
mod regression;
mod validation;

pub use fixed_effects::{within_transform, FixedEffects, SingletonReport};
pub use regression::{ols, tsls, Column, FirstStage, FitResult, RegressionSpec, Table};
pub use validation::{
    aggregate_decomposition, build_changes, changes_table, iv_fit_test, predicted_changes, ChangeObs,
    DecompositionReport, PriceConvention, PredictedChange, ValidationSpec,
};
