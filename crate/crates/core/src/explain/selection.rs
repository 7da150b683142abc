//! Importance ranking and per-target feature selection.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::shap::{background_matrix, shap_values_matrix};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gbtree::Ensemble;
use crate::schema::FeatureSchema;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub feature: String,
    pub mean_abs_shap: f64,
}

/// Features by mean `|φ|` over the rows of `data`, descending; ties keep
/// the model's feature order.
pub fn rank_features(
    model: &Ensemble,
    data: &Dataset,
    background: &Dataset,
) -> Result<Vec<Importance>> {
    if data.n_rows() == 0 {
        return Err(Error::Empty("ranking data".into()));
    }
    let d = model.features.len();
    let x = background_matrix(model, data)?;
    let bg = background_matrix(model, background)?;
    let per_row: Vec<Vec<f64>> = x
        .par_chunks_exact(d)
        .map(|row| shap_values_matrix(model, row, &bg).map(|a| a.values()))
        .collect::<Result<_>>()?;
    let mut out: Vec<Importance> = (0..d)
        .map(|j| Importance {
            feature: model.features[j].clone(),
            mean_abs_shap: per_row.iter().map(|p| p[j].abs()).sum::<f64>() / per_row.len() as f64,
        })
        .collect();
    out.sort_by(|a, b| b.mean_abs_shap.total_cmp(&a.mean_abs_shap));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionPolicy {
    /// Explicit exclusions.
    FixedList { excluded: Vec<String> },
    /// Drop the `k` least important inputs.
    BottomK { k: usize },
    /// Drop inputs whose mean `|φ|` is below `fraction` of the total.
    Threshold { fraction: f64 },
}

impl SelectionPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            Self::FixedList { .. } => "fixed-list",
            Self::BottomK { .. } => "bottom-k",
            Self::Threshold { .. } => "threshold",
        }
    }
}

/// Partition of the schema inputs for one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    pub target: String,
    pub included: Vec<String>,
    pub excluded: Vec<String>,
    pub policy: SelectionPolicy,
}

/// Applies `policy` to the input columns of `schema`. Inputs missing from
/// `ranking` count as zero importance and rank after every listed feature.
pub fn select_features(
    schema: &FeatureSchema,
    target: &str,
    ranking: &[Importance],
    policy: &SelectionPolicy,
) -> Result<FeatureSelection> {
    let inputs = schema.input_names();
    let drop: Vec<String> = match policy {
        SelectionPolicy::FixedList { excluded } => {
            for e in excluded {
                if !inputs.contains(e) {
                    return Err(Error::UnknownColumn(e.clone()));
                }
            }
            excluded.clone()
        }
        SelectionPolicy::BottomK { k } => {
            let ordered = importance_order(&inputs, ranking);
            ordered
                .iter()
                .rev()
                .take(*k)
                .map(|(f, _)| f.clone())
                .collect()
        }
        SelectionPolicy::Threshold { fraction } => {
            if !(0.0..=1.0).contains(fraction) {
                return Err(Error::InvalidArgument(format!(
                    "threshold fraction {fraction} outside [0, 1]"
                )));
            }
            let ordered = importance_order(&inputs, ranking);
            let total: f64 = ordered.iter().map(|(_, v)| v).sum();
            ordered
                .iter()
                .filter(|(_, v)| *v < fraction * total)
                .map(|(f, _)| f.clone())
                .collect()
        }
    };
    let (excluded, included): (Vec<String>, Vec<String>) =
        inputs.into_iter().partition(|f| drop.contains(f));
    Ok(FeatureSelection {
        target: target.to_string(),
        included,
        excluded,
        policy: policy.clone(),
    })
}

fn importance_order(inputs: &[String], ranking: &[Importance]) -> Vec<(String, f64)> {
    let mut v: Vec<(usize, String, f64)> = inputs
        .iter()
        .enumerate()
        .map(
            |(i, f)| match ranking.iter().position(|r| &r.feature == f) {
                Some(p) => (p, f.clone(), ranking[p].mean_abs_shap),
                None => (ranking.len() + i, f.clone(), 0.0),
            },
        )
        .collect();
    v.sort_by_key(|(p, _, _)| *p);
    v.into_iter().map(|(_, f, s)| (f, s)).collect()
}

#[derive(Debug, Clone, Deserialize)]
struct ExclusionFile {
    version: u32,
    targets: BTreeMap<String, Vec<String>>,
}

/// Shipped per-target exclusion lists for the UHPC schema.
pub fn default_exclusions() -> BTreeMap<String, Vec<String>> {
    let f: ExclusionFile = serde_json::from_str(include_str!("../../data/feature_selection.json"))
        .expect("bundled selection file parses");
    debug_assert_eq!(f.version, 1);
    f.targets
}

/// The shipped fixed-list policy for `target`.
pub fn default_policy(target: &str) -> Result<SelectionPolicy> {
    default_exclusions()
        .remove(target)
        .map(|excluded| SelectionPolicy::FixedList { excluded })
        .ok_or_else(|| Error::UnknownTarget(target.to_string()))
}
