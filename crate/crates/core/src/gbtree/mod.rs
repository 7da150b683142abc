//! Second-order gradient-boosted regression trees over histogram-binned
//! features, with L1/L2-regularized leaves and a minimum split gain.

pub mod binning;
pub mod config;
pub mod learner;
pub mod tree;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use config::GbtConfig;
pub use learner::fit_matrix;
pub use tree::{Node, Tree};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// `sign(G) · max(|G| − λ1, 0)`.
pub fn soft_threshold(g: f64, lambda_l1: f64) -> f64 {
    g.signum() * (g.abs() - lambda_l1).max(0.0)
}

fn score(g: f64, h: f64, lambda_l1: f64, lambda_l2: f64) -> f64 {
    let denom = h + lambda_l2;
    if denom <= 0.0 {
        return 0.0;
    }
    let s = soft_threshold(g, lambda_l1);
    s * s / denom
}

/// Loss reduction of splitting a node into the given children, minus `gamma`.
pub fn split_gain(
    g_left: f64,
    h_left: f64,
    g_right: f64,
    h_right: f64,
    lambda_l1: f64,
    lambda_l2: f64,
    gamma: f64,
) -> f64 {
    let parent = score(g_left + g_right, h_left + h_right, lambda_l1, lambda_l2);
    0.5 * (score(g_left, h_left, lambda_l1, lambda_l2)
        + score(g_right, h_right, lambda_l1, lambda_l2)
        - parent)
        - gamma
}

/// Optimal leaf value `−S(G) / (H + λ2)`, before learning-rate scaling.
pub fn leaf_weight(g: f64, h: f64, lambda_l1: f64, lambda_l2: f64) -> f64 {
    let denom = h + lambda_l2;
    if denom <= 0.0 {
        return 0.0;
    }
    -soft_threshold(g, lambda_l1) / denom
}

/// A fitted boosted model. Prediction is `base_score` plus one leaf weight per
/// tree, summed in tree order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub base_score: f64,
    pub features: Vec<String>,
    pub trees: Vec<Tree>,
    pub config: GbtConfig,
}

impl Ensemble {
    /// Model that always predicts `base_score`.
    pub fn constant(base_score: f64, features: Vec<String>, config: GbtConfig) -> Self {
        Self {
            base_score,
            features,
            trees: Vec::new(),
            config,
        }
    }

    /// `x` is ordered as [`Ensemble::features`].
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut acc = self.base_score;
        for t in &self.trees {
            acc += t.predict(x);
        }
        acc
    }

    pub fn predict_map(&self, values: &HashMap<String, f64>) -> Result<f64> {
        let x = self
            .features
            .iter()
            .map(|f| {
                values
                    .get(f)
                    .copied()
                    .ok_or_else(|| Error::MissingFeature(f.clone()))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(self.predict_row(&x))
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        let d = self.features.len();
        let x = data.matrix(&self.features).map_err(|e| match e {
            Error::UnknownColumn(c) => Error::MissingFeature(c),
            other => other,
        })?;
        Ok(x.chunks_exact(d).map(|r| self.predict_row(r)).collect())
    }

    pub fn max_depth(&self) -> usize {
        self.trees.iter().map(Tree::depth).max().unwrap_or(0)
    }

    /// Features referenced by at least one split, in feature-list order.
    pub fn used_features(&self) -> Vec<String> {
        let mut used = vec![false; self.features.len()];
        for t in &self.trees {
            for f in t.used_features() {
                used[f] = true;
            }
        }
        self.features
            .iter()
            .zip(used)
            .filter(|(_, u)| *u)
            .map(|(f, _)| f.clone())
            .collect()
    }
}

/// Fits `target` on the named feature columns of `train`.
pub fn fit(
    train: &Dataset,
    features: &[String],
    target: &str,
    config: &GbtConfig,
) -> Result<Ensemble> {
    if features.is_empty() {
        return Err(Error::InvalidArgument("feature set is empty".into()));
    }
    let x = train.matrix(features)?;
    let y = train.column_by_name(target)?;
    fit_matrix(&x, features, &y, config).map(|(e, _)| e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn gain_hand_value() {
        let g = split_gain(-4.0, 2.0, 6.0, 3.0, 0.0, 1.0, 0.0);
        assert!(close(g, 0.5 * (16.0 / 3.0 + 36.0 / 4.0 - 4.0 / 6.0)));
        assert!((g - 6.8333).abs() < 1e-4);
    }

    #[test]
    fn identical_children_gain_zero_without_l2() {
        assert!(close(split_gain(3.0, 2.0, 3.0, 2.0, 0.0, 0.0, 0.0), 0.0));
        // with λ2 > 0 splitting identical halves is penalized
        assert!(split_gain(3.0, 2.0, 3.0, 2.0, 0.0, 1.0, 0.0) < 0.0);
    }

    #[test]
    fn gamma_is_additive() {
        let a = split_gain(-1.5, 4.0, 2.5, 7.0, 0.3, 0.6, 0.0);
        let b = split_gain(-1.5, 4.0, 2.5, 7.0, 0.3, 0.6, 0.9);
        assert!(close(b - a, -0.9));
    }

    #[test]
    fn leaf_hand_values() {
        assert!(close(leaf_weight(-4.0, 2.0, 0.0, 1.0), 4.0 / 3.0));
        assert!(close(leaf_weight(-4.0, 2.0, 0.5, 1.0), 3.5 / 3.0));
        assert_eq!(leaf_weight(0.4, 2.0, 0.5, 1.0), 0.0);
        assert_eq!(leaf_weight(-0.5, 2.0, 0.5, 1.0), 0.0);
    }

    #[test]
    fn zero_hessian_and_zero_l2_is_finite() {
        assert_eq!(leaf_weight(1.0, 0.0, 0.0, 0.0), 0.0);
        assert!(split_gain(1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0).is_finite());
    }

    #[test]
    fn constant_model_predicts_base() {
        let e = Ensemble::constant(4.5, vec!["a".into()], GbtConfig::default());
        assert_eq!(e.predict_row(&[100.0]), 4.5);
    }

    #[test]
    fn missing_feature_named() {
        let e = Ensemble::constant(1.0, vec!["a".into(), "b".into()], GbtConfig::default());
        let mut m = HashMap::new();
        m.insert("a".to_string(), 1.0);
        match e.predict_map(&m) {
            Err(Error::MissingFeature(f)) => assert_eq!(f, "b"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
