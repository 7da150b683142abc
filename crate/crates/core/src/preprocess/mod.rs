//! Pre-training data cleaning: correlation analysis, multicollinearity
//! pruning and Isolation Forest outlier removal.

pub mod correlation;
pub mod isolation;

pub use correlation::{
    correlation_matrix, prune_multicollinear, CorrelationMatrix, DropRecord, PruneOutcome,
};
pub use isolation::{
    average_path_length, filter_outliers, fit_isolation_forest, score_anomalies,
    IsolationForestModel,
};
