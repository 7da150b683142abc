//! Versioned JSON model bundles and the queries served from them.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{FilterScope, PipelineConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::explain::shap::shap_values_matrix;
use crate::explain::{Attribution, FeatureSelection};
use crate::gbtree::{Ensemble, GbtConfig};
use crate::metrics::{evaluate, MetricsReport};
use crate::preprocess::PruneOutcome;
use crate::schema::FeatureSchema;
use crate::standardize::StandardizationParams;

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

/// Best trial of a model's hyperparameter search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    /// `None` when the configuration was reused rather than searched.
    pub n_trials: Option<usize>,
    pub k: usize,
    pub best_index: Option<usize>,
    pub best_mean_rmse: Option<f64>,
    /// Trial-log file (relative to the bundle) and the stage tag of its lines.
    pub log: String,
    pub stage: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub selection: FeatureSelection,
    /// Fitted on this model's rows and features; the ensemble sees standardized inputs.
    pub standardization: StandardizationParams,
    pub config: GbtConfig,
    pub ensemble: Ensemble,
    pub train_ids: Vec<u64>,
    pub test_ids: Vec<u64>,
    pub train_metrics: MetricsReport,
    pub test_metrics: MetricsReport,
    pub search: SearchSummary,
    /// Standardized background rows in ensemble feature order.
    pub background: Vec<Vec<f64>>,
}

impl ModelEntry {
    /// Standardizes raw inputs (keyed by column name) into ensemble order.
    pub fn prepare(&self, raw: &HashMap<String, f64>) -> Result<Vec<f64>> {
        self.ensemble
            .features
            .iter()
            .map(|f| {
                let v = raw
                    .get(f)
                    .copied()
                    .ok_or_else(|| Error::MissingFeature(f.clone()))?;
                if !v.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "feature \"{f}\" is not finite"
                    )));
                }
                self.standardization.standardize(f, v)
            })
            .collect()
    }

    pub fn predict(&self, raw: &HashMap<String, f64>) -> Result<f64> {
        Ok(self.ensemble.predict_row(&self.prepare(raw)?))
    }

    /// Predictions for the dataset rows, from their raw values.
    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        let z = self
            .standardization
            .apply_columns(data, &self.ensemble.features)?;
        self.ensemble.predict_dataset(&z)
    }

    pub fn explain(&self, raw: &HashMap<String, f64>) -> Result<Attribution> {
        let x = self.prepare(raw)?;
        let bg: Vec<f64> = self.background.iter().flatten().copied().collect();
        shap_values_matrix(&self.ensemble, &x, &bg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetEntry {
    pub target: String,
    pub unit: String,
    pub model1: ModelEntry,
    pub model2: Option<ModelEntry>,
}

impl TargetEntry {
    /// The refined model when present, otherwise Model 1.
    pub fn serving(&self) -> &ModelEntry {
        self.model2.as_ref().unwrap_or(&self.model1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierAudit {
    pub scope: FilterScope,
    pub contamination: f64,
    pub n_scored: usize,
    pub removed: Vec<RemovedRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedRow {
    pub row_id: u64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cleaning {
    pub prune: PruneOutcome,
    pub outliers: OutlierAudit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreationInfo {
    pub seed: u64,
    pub split_seed: u64,
    pub tool_version: String,
    /// Seconds since the Unix epoch; the only non-reproducible field.
    pub created_unix: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: u32,
    pub schema: FeatureSchema,
    pub config: PipelineConfig,
    pub created: CreationInfo,
    pub cleaning: Option<Cleaning>,
    pub targets: Vec<TargetEntry>,
}

/// One served prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub target: String,
    pub value: f64,
    pub unit: String,
    pub features_used: Vec<String>,
}

impl ModelBundle {
    pub fn entry(&self, target: &str) -> Result<&TargetEntry> {
        let name = self
            .schema
            .resolve_target(target)
            .unwrap_or_else(|_| target.to_string());
        self.targets
            .iter()
            .find(|t| t.target == name)
            .ok_or_else(|| Error::UnknownTarget(target.to_string()))
    }

    pub fn predict(&self, target: &str, raw: &HashMap<String, f64>) -> Result<f64> {
        self.entry(target)?.serving().predict(raw)
    }

    /// Every target's serving-model prediction, in bundle order.
    pub fn predict_all(&self, raw: &HashMap<String, f64>) -> Result<Vec<Prediction>> {
        self.targets
            .iter()
            .map(|t| {
                let m = t.serving();
                Ok(Prediction {
                    target: t.target.clone(),
                    value: m.predict(raw)?,
                    unit: t.unit.clone(),
                    features_used: m.ensemble.features.clone(),
                })
            })
            .collect()
    }

    pub fn explain(&self, target: &str, raw: &HashMap<String, f64>) -> Result<Attribution> {
        self.entry(target)?.serving().explain(raw)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Probe {
            format_version: u32,
        }
        let probe: Probe = serde_json::from_str(text)?;
        if probe.format_version != BUNDLE_FORMAT_VERSION {
            return Err(Error::Version {
                found: probe.format_version,
                supported: BUNDLE_FORMAT_VERSION,
            });
        }
        let bundle: ModelBundle = serde_json::from_str(text)?;
        bundle.check_consistency()?;
        Ok(bundle)
    }

    /// Every ensemble uses only features its selection includes.
    pub fn check_consistency(&self) -> Result<()> {
        for t in &self.targets {
            for m in std::iter::once(&t.model1).chain(t.model2.as_ref()) {
                if let Some(f) = m
                    .ensemble
                    .features
                    .iter()
                    .find(|f| !m.selection.included.contains(f))
                {
                    return Err(Error::Schema(format!(
                        "{}: ensemble feature \"{f}\" is not in its selection",
                        t.target
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn save_bundle(bundle: &ModelBundle, path: &Path) -> Result<()> {
    fs::write(path, bundle.to_json()?)?;
    Ok(())
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle> {
    ModelBundle::from_json(&fs::read_to_string(path)?)
}

/// Largest stored-vs-recomputed metric difference over both models of every
/// target, recomputed from the stored ensembles and split ids against `data`.
pub fn verify_metrics(bundle: &ModelBundle, data: &Dataset) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for t in &bundle.targets {
        for m in std::iter::once(&t.model1).chain(t.model2.as_ref()) {
            for (ids, stored) in [
                (&m.train_ids, &m.train_metrics),
                (&m.test_ids, &m.test_metrics),
            ] {
                let rows = data.select_ids(ids)?;
                let y = rows.column_by_name(&t.target)?;
                let again = evaluate(&y, &m.predict_dataset(&rows)?)?;
                worst = worst.max(metrics_gap(stored, &again));
            }
        }
    }
    Ok(worst)
}

fn metrics_gap(a: &MetricsReport, b: &MetricsReport) -> f64 {
    let opt = |x: Option<f64>, y: Option<f64>| match (x, y) {
        (Some(x), Some(y)) => (x - y).abs(),
        (None, None) => 0.0,
        _ => f64::INFINITY,
    };
    [
        (a.mae - b.mae).abs(),
        (a.mse - b.mse).abs(),
        (a.rmse - b.rmse).abs(),
        (a.maxae - b.maxae).abs(),
        opt(a.r2, b.r2),
        opt(a.pmae_percent, b.pmae_percent),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentError {
    pub row_id: u64,
    pub actual: f64,
    pub predicted: f64,
    /// `100 · (ŷ − y) / y`; `None` when `|y| < 1e-9`.
    pub percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutOfSetReport {
    pub target: String,
    pub rows: Vec<PercentError>,
    /// Signed error with the largest magnitude.
    pub max_abs_percent: Option<f64>,
    pub flagged_zero_targets: usize,
}

/// Per-row signed percentage errors of the serving model on held-out rows.
pub fn validate_out_of_set(
    bundle: &ModelBundle,
    data: &Dataset,
    target: &str,
) -> Result<OutOfSetReport> {
    let entry = bundle.entry(target)?;
    let y = data.column_by_name(&entry.target)?;
    let y_hat = entry.serving().predict_dataset(data)?;
    Ok(percent_report(&entry.target, data.row_ids(), &y, &y_hat))
}

pub fn percent_report(target: &str, ids: &[u64], y: &[f64], y_hat: &[f64]) -> OutOfSetReport {
    let rows: Vec<PercentError> = ids
        .iter()
        .zip(y.iter().zip(y_hat))
        .map(|(&row_id, (&actual, &predicted))| PercentError {
            row_id,
            actual,
            predicted,
            percent: (actual.abs() >= crate::metrics::PMAE_ZERO_EPS)
                .then(|| 100.0 * (predicted - actual) / actual),
        })
        .collect();
    let max_abs_percent =
        rows.iter()
            .filter_map(|r| r.percent)
            .fold(None, |acc: Option<f64>, p| match acc {
                Some(a) if a.abs() >= p.abs() => Some(a),
                _ => Some(p),
            });
    OutOfSetReport {
        target: target.to_string(),
        flagged_zero_targets: rows.iter().filter(|r| r.percent.is_none()).count(),
        rows,
        max_abs_percent,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_error_format() {
        let r = percent_report("cs", &[1, 2, 3], &[100.0, 100.0, 0.0], &[112.4, 91.7, 5.0]);
        assert!((r.rows[0].percent.unwrap() - 12.4).abs() < 1e-9);
        assert!((r.rows[1].percent.unwrap() + 8.3).abs() < 1e-9);
        assert_eq!(r.rows[2].percent, None);
        assert_eq!(r.flagged_zero_targets, 1);
        assert!((r.max_abs_percent.unwrap() - 12.4).abs() < 1e-9);
        let exact = percent_report("cs", &[1], &[5.0], &[5.0]);
        assert_eq!(exact.rows[0].percent, Some(0.0));
    }

    #[test]
    fn future_version_rejected() {
        let text = r#"{"format_version": 99}"#;
        assert!(matches!(
            ModelBundle::from_json(text),
            Err(Error::Version {
                found: 99,
                supported: 1
            })
        ));
        assert!(matches!(
            ModelBundle::from_json("{\"format_version\": 1,"),
            Err(Error::Json { .. })
        ));
    }
}
