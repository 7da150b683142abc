//! Two-stage training workflow and model bundles.

pub mod bundle;
pub mod config;
pub mod run;

pub use bundle::{
    load_bundle, save_bundle, validate_out_of_set, verify_metrics, ModelBundle, ModelEntry,
    OutOfSetReport, Prediction, TargetEntry, BUNDLE_FORMAT_VERSION,
};
pub use config::{FilterScope, PipelineConfig};
pub use run::{
    clean, prepare, run_pipeline, run_stage1, run_stage2, stage1_bundle, tune_target, write_run,
    Cleaned, PipelineReport, PipelineRun, Prepared, Stage1, TrialLine,
};
