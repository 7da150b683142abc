use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::{default_exclusions, SelectionPolicy};
use crate::preprocess::isolation::{DEFAULT_PSI, DEFAULT_TREES};
use crate::schema::FeatureSchema;
use crate::tune::{SearchSpace, DEFAULT_FOLDS, DEFAULT_TRIALS};

/// Which rows the outlier filter sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterScope {
    /// Score and filter the whole dataset, then re-split.
    FullDataset,
    /// Keep the Stage 1 split; score and filter training rows only.
    TrainOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Target column names; empty means every schema target.
    pub targets: Vec<String>,
    pub train_fraction: f64,
    /// Master seed; every component seed derives from it.
    pub seed: u64,
    pub prune_threshold: f64,
    pub contamination: f64,
    pub filter_scope: FilterScope,
    pub isolation_trees: usize,
    pub isolation_psi: usize,
    /// Per-target policy; targets without an entry use the shipped list.
    pub selection: BTreeMap<String, SelectionPolicy>,
    pub search: SearchSpace,
    pub n_trials: usize,
    pub k: usize,
    /// Re-tune Stage 2 instead of reusing the Stage 1 best configuration.
    pub retune_stage2: bool,
    /// Background rows kept per model for attribution.
    pub background_size: usize,
    /// Rows whose attributions drive ranking-based selection policies.
    pub ranking_rows: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            targets: Vec::new(),
            train_fraction: 0.7,
            seed: 42,
            prune_threshold: 0.7,
            contamination: 0.10,
            filter_scope: FilterScope::FullDataset,
            isolation_trees: DEFAULT_TREES,
            isolation_psi: DEFAULT_PSI,
            selection: BTreeMap::new(),
            search: SearchSpace::default(),
            n_trials: DEFAULT_TRIALS,
            k: DEFAULT_FOLDS,
            retune_stage2: true,
            background_size: 128,
            ranking_rows: 200,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!(
                "train_fraction {} must lie in (0, 1)",
                self.train_fraction
            ));
        }
        if !(self.prune_threshold > 0.0 && self.prune_threshold <= 1.0) {
            return bad(format!(
                "prune_threshold {} must lie in (0, 1]",
                self.prune_threshold
            ));
        }
        if !(0.0..0.5).contains(&self.contamination) {
            return bad(format!(
                "contamination {} must lie in [0, 0.5)",
                self.contamination
            ));
        }
        if self.n_trials == 0 || self.k < 2 || self.isolation_trees == 0 || self.isolation_psi < 2 {
            return bad(
                "need n_trials ≥ 1, k ≥ 2, isolation_trees ≥ 1 and isolation_psi ≥ 2".into(),
            );
        }
        if self.background_size == 0 || self.ranking_rows == 0 {
            return bad("background_size and ranking_rows must be positive".into());
        }
        self.search.validate()
    }

    /// Resolved target column names, in schema order when unspecified.
    pub fn resolve_targets(&self, schema: &FeatureSchema) -> Result<Vec<String>> {
        if self.targets.is_empty() {
            return Ok(schema.target_names());
        }
        let mut out: Vec<String> = Vec::new();
        for t in &self.targets {
            let name = schema.resolve_target(t)?;
            if !out.contains(&name) {
                out.push(name);
            }
        }
        Ok(out)
    }

    pub fn policy_for(&self, target: &str) -> Result<SelectionPolicy> {
        if let Some(p) = self.selection.get(target) {
            return Ok(p.clone());
        }
        // schemas other than the shipped one default to keeping every input
        Ok(default_exclusions()
            .remove(target)
            .map_or(SelectionPolicy::BottomK { k: 0 }, |excluded| {
                SelectionPolicy::FixedList { excluded }
            }))
    }

    /// Configuration with every cleaning step disabled.
    pub fn without_cleaning(mut self, schema: &FeatureSchema) -> Self {
        self.prune_threshold = 1.0;
        self.contamination = 0.0;
        for t in schema.target_names() {
            self.selection.insert(t, SelectionPolicy::BottomK { k: 0 });
        }
        self
    }

    /// Applies a `key=value` override; the value is parsed as JSON, falling
    /// back to a plain string. Nested keys use dots (`search.n_rounds=300`).
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override \"{assignment}\" is not key=value")))?;
        let value: serde_json::Value = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        let mut doc = serde_json::to_value(&*self)?;
        let mut slot = &mut doc;
        for part in key.split('.') {
            slot = slot
                .get_mut(part)
                .ok_or_else(|| Error::Config(format!("unknown configuration key \"{key}\"")))?;
        }
        *slot = value;
        *self = serde_json::from_value(doc)
            .map_err(|e| Error::Config(format!("override {key}: {e}")))?;
        Ok(())
    }
}
