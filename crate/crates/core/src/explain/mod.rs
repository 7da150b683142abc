//! Shapley attributions, importance ranking and feature selection.

pub mod selection;
pub mod shap;

pub use selection::{
    default_exclusions, default_policy, rank_features, select_features, FeatureSelection,
    Importance, SelectionPolicy,
};
pub use shap::{brute_force_shapley, shap_values, Attribution, Contribution};
