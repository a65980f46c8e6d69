//! Closed-form bilateral markups, elasticities and pass-through.
//!
//! Every function is a pure map from shares `(s, x)` and parameters to
//! numbers. Share endpoints (s ∈ {0, 1}, x ∈ {0, 1}) are evaluated by their
//! analytic limits.

mod elasticity;
mod heatmap;
mod markup;
mod variants;

pub use elasticity::{
    cost_elasticity, gamma_oligopoly, gamma_oligopsony, gamma_omega, lambda_share_elasticity,
    markup_elasticity, markup_elasticity_unreduced, passthrough, share_elasticities,
    ElasticityDecomposition, ShareElasticities,
};
pub use heatmap::{heatmap_grid, write_heatmap_csv, HeatmapRow};
pub use markup::{
    bargaining_weight, bilateral_markup, lambda_components, oligopoly_markup, oligopsony_markdown,
    residual_demand_elasticity, LambdaComponents, MarkupDecomposition,
};
pub use variants::{
    efficient_bargain_price, generalized_markup, CostAtQuantity, GeneralizedMarkup,
    GeneralizedOutsideOption,
};
pub use crate::params::derive_eta;
