use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of the boosted-tree learner.
///
/// [`GbtConfig::validate`] accepts any well-formed configuration (including
/// unregularized ones such as `lambda_l1 = lambda_l2 = gamma = 0`);
/// [`GbtConfig::declared_range_violations`] reports departures from the tuned
/// search ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbtConfig {
    pub learning_rate: f64,
    pub max_depth: usize,
    pub subsample: f64,
    pub colsample_bytree: f64,
    pub lambda_l1: f64,
    pub lambda_l2: f64,
    pub max_bin: usize,
    pub min_child_weight: f64,
    pub gamma: f64,
    pub n_rounds: usize,
    pub seed: u64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            max_depth: 6,
            subsample: 1.0,
            colsample_bytree: 1.0,
            lambda_l1: 0.05,
            lambda_l2: 1.0,
            max_bin: 256,
            min_child_weight: 1.0,
            gamma: 0.0,
            n_rounds: 500,
            seed: 0,
        }
    }
}

/// Largest supported bin count; bin indices are stored as `u16`.
pub const MAX_BIN_LIMIT: usize = 4096;

/// Declared tuning ranges (inclusive).
pub const LEARNING_RATE_RANGE: (f64, f64) = (0.01, 0.3);
pub const MAX_DEPTH_RANGE: (usize, usize) = (2, 20);
pub const SUBSAMPLE_RANGE: (f64, f64) = (0.5, 1.0);
pub const COLSAMPLE_RANGE: (f64, f64) = (0.5, 1.0);
pub const LAMBDA_L1_RANGE: (f64, f64) = (0.05, 1.0);
pub const LAMBDA_L2_RANGE: (f64, f64) = (0.05, 1.0);
pub const MAX_BIN_RANGE: (usize, usize) = (10, 2000);
pub const MIN_CHILD_WEIGHT_RANGE: (f64, f64) = (1.0, 10.0);
pub const GAMMA_RANGE: (f64, f64) = (0.0, 0.9);

impl GbtConfig {
    /// Optimum reported for compressive strength.
    pub fn compressive_optimum() -> Self {
        Self {
            learning_rate: 0.01,
            max_depth: 18,
            subsample: 0.94,
            colsample_bytree: 0.94,
            lambda_l1: 0.55,
            lambda_l2: 0.67,
            max_bin: 1000,
            min_child_weight: 6.0,
            gamma: 0.05,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!(
                "learning_rate {} must lie in (0, 1]",
                self.learning_rate
            ));
        }
        if self.max_depth == 0 || self.max_depth > 64 {
            return bad(format!("max_depth {} must lie in [1, 64]", self.max_depth));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad(format!("subsample {} must lie in (0, 1]", self.subsample));
        }
        if !(self.colsample_bytree > 0.0 && self.colsample_bytree <= 1.0) {
            return bad(format!(
                "colsample_bytree {} must lie in (0, 1]",
                self.colsample_bytree
            ));
        }
        for (name, v) in [
            ("lambda_l1", self.lambda_l1),
            ("lambda_l2", self.lambda_l2),
            ("min_child_weight", self.min_child_weight),
            ("gamma", self.gamma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} {v} must be finite and non-negative"));
            }
        }
        if self.max_bin < 2 || self.max_bin > MAX_BIN_LIMIT {
            return bad(format!(
                "max_bin {} must lie in [2, {MAX_BIN_LIMIT}]",
                self.max_bin
            ));
        }
        if self.n_rounds == 0 {
            return bad("n_rounds must be at least 1".into());
        }
        Ok(())
    }

    /// Names of fields outside the declared tuning ranges.
    pub fn declared_range_violations(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let within = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        if !within(self.learning_rate, LEARNING_RATE_RANGE) {
            out.push("learning_rate");
        }
        if self.max_depth < MAX_DEPTH_RANGE.0 || self.max_depth > MAX_DEPTH_RANGE.1 {
            out.push("max_depth");
        }
        if !within(self.subsample, SUBSAMPLE_RANGE) {
            out.push("subsample");
        }
        if !within(self.colsample_bytree, COLSAMPLE_RANGE) {
            out.push("colsample_bytree");
        }
        if !within(self.lambda_l1, LAMBDA_L1_RANGE) {
            out.push("lambda_l1");
        }
        if !within(self.lambda_l2, LAMBDA_L2_RANGE) {
            out.push("lambda_l2");
        }
        if self.max_bin < MAX_BIN_RANGE.0 || self.max_bin > MAX_BIN_RANGE.1 {
            out.push("max_bin");
        }
        if !within(self.min_child_weight, MIN_CHILD_WEIGHT_RANGE) {
            out.push("min_child_weight");
        }
        if !within(self.gamma, GAMMA_RANGE) {
            out.push("gamma");
        }
        out
    }
}
