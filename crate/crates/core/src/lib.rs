//! Mixture-design property prediction: ingestion, cleaning, boosted-tree
//! learning, tuning, attribution and model bundles.

pub mod baselines;
pub mod dataset;
pub mod error;
pub mod explain;
pub mod gbtree;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod schema;
pub mod standardize;
pub mod synthetic;
pub mod tune;

pub use dataset::{load_dataset, read_dataset, split, Dataset};
pub use error::{Error, Result};
pub use gbtree::{Ensemble, GbtConfig};
pub use metrics::{evaluate, select_optimal, Gate, MetricsReport};
pub use schema::{ColumnKind, ColumnSpec, FeatureSchema};
pub use standardize::{fit_standardizer, StandardizationParams};
