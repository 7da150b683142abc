//! Interventional Shapley values of tree ensembles against a background set.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gbtree::{Ensemble, Node, Tree};

/// Largest feature count accepted by [`brute_force_shapley`].
pub const BRUTE_FORCE_MAX_FEATURES: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub feature: String,
    pub value: f64,
}

/// `base_value + Σ contributions = prediction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub base_value: f64,
    pub prediction: f64,
    pub contributions: Vec<Contribution>,
}

impl Attribution {
    fn new(model: &Ensemble, base_value: f64, prediction: f64, phi: Vec<f64>) -> Self {
        let contributions = model
            .features
            .iter()
            .zip(phi)
            .map(|(f, value)| Contribution {
                feature: f.clone(),
                value,
            })
            .collect();
        Self {
            base_value,
            prediction,
            contributions,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.contributions.iter().map(|c| c.value).collect()
    }

    /// `|base_value + Σφ − prediction|`.
    pub fn local_accuracy_error(&self) -> f64 {
        let sum: f64 = self.contributions.iter().map(|c| c.value).sum();
        (self.base_value + sum - self.prediction).abs()
    }
}

/// Background rows as a row-major matrix over the model's features.
pub fn background_matrix(model: &Ensemble, background: &Dataset) -> Result<Vec<f64>> {
    background.matrix(&model.features).map_err(|e| match e {
        Error::UnknownColumn(c) => Error::MissingFeature(c),
        other => other,
    })
}

/// Shapley weights `(a−1)!·b!/(a+b)!` indexed `[a][b]`.
struct Weights {
    w: Vec<Vec<f64>>,
}

impl Weights {
    fn new(d: usize) -> Self {
        let mut fact = vec![1.0f64; d + 2];
        for i in 1..fact.len() {
            fact[i] = fact[i - 1] * i as f64;
        }
        let w = (0..=d)
            .map(|a| {
                (0..=d)
                    .map(|b| {
                        if a == 0 || a + b > d {
                            0.0
                        } else {
                            fact[a - 1] * fact[b] / fact[a + b]
                        }
                    })
                    .collect()
            })
            .collect();
        Self { w }
    }

    /// Weight of a feature on the row side; the background side uses `pos(b, a)`.
    fn pos(&self, a: usize, b: usize) -> f64 {
        self.w[a][b]
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Side {
    Free,
    Row,
    Background,
}

struct Walker<'a> {
    tree: &'a Tree,
    x: &'a [f64],
    z: &'a [f64],
    weights: &'a Weights,
    side: Vec<Side>,
    row_set: Vec<usize>,
    bg_set: Vec<usize>,
}

impl Walker<'_> {
    /// Visits every leaf reachable under some assignment of diverging
    /// features to the row or background side. A leaf reached with row set
    /// `A` and background set `B` is the indicator game `v·[A ⊆ S, B ∩ S = ∅]`.
    fn walk(&mut self, node: usize, phi: &mut [f64]) {
        match &self.tree.nodes[node] {
            Node::Leaf { weight, .. } => {
                let (a, b) = (self.row_set.len(), self.bg_set.len());
                if a + b == 0 {
                    return;
                }
                if a > 0 {
                    let w = weight * self.weights.pos(a, b);
                    for &i in &self.row_set {
                        phi[i] += w;
                    }
                }
                if b > 0 {
                    let w = weight * self.weights.pos(b, a);
                    for &j in &self.bg_set {
                        phi[j] -= w;
                    }
                }
            }
            Node::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                let f = *feature;
                let go = |v: f64| if v < *threshold { *left } else { *right };
                let (cx, cz) = (go(self.x[f]), go(self.z[f]));
                if cx == cz {
                    return self.walk(cx, phi);
                }
                match self.side[f] {
                    Side::Row => self.walk(cx, phi),
                    Side::Background => self.walk(cz, phi),
                    Side::Free => {
                        self.side[f] = Side::Row;
                        self.row_set.push(f);
                        self.walk(cx, phi);
                        self.row_set.pop();
                        self.side[f] = Side::Background;
                        self.bg_set.push(f);
                        self.walk(cz, phi);
                        self.bg_set.pop();
                        self.side[f] = Side::Free;
                    }
                }
            }
        }
    }
}

/// Attributions of one tree for row `x` against a single background row `z`.
fn tree_shap_pair(tree: &Tree, x: &[f64], z: &[f64], weights: &Weights, phi: &mut [f64]) {
    let mut w = Walker {
        tree,
        x,
        z,
        weights,
        side: vec![Side::Free; x.len()],
        row_set: Vec::new(),
        bg_set: Vec::new(),
    };
    w.walk(0, phi);
}

/// Shapley values of `row` (ordered as `model.features`) where absent
/// features are marginalized over the background rows.
pub fn shap_values(model: &Ensemble, row: &[f64], background: &Dataset) -> Result<Attribution> {
    let bg = background_matrix(model, background)?;
    shap_values_matrix(model, row, &bg)
}

/// As [`shap_values`] with the background given as a row-major matrix.
pub fn shap_values_matrix(
    model: &Ensemble,
    row: &[f64],
    background: &[f64],
) -> Result<Attribution> {
    let d = model.features.len();
    check_inputs(d, row, background)?;
    let weights = Weights::new(d);
    let m = background.len() / d;
    let mut phi = vec![0.0; d];
    let mut base = 0.0;
    for z in background.chunks_exact(d) {
        base += model.predict_row(z);
        for tree in &model.trees {
            tree_shap_pair(tree, row, z, &weights, &mut phi);
        }
    }
    for p in &mut phi {
        *p /= m as f64;
    }
    Ok(Attribution::new(
        model,
        base / m as f64,
        model.predict_row(row),
        phi,
    ))
}

fn check_inputs(d: usize, row: &[f64], background: &[f64]) -> Result<()> {
    if row.len() != d {
        return Err(Error::InvalidArgument(format!(
            "row has {} values, model expects {d}",
            row.len()
        )));
    }
    if background.is_empty() {
        return Err(Error::Empty("background set".into()));
    }
    if d == 0 || !background.len().is_multiple_of(d) {
        return Err(Error::InvalidArgument(
            "background matrix shape mismatch".into(),
        ));
    }
    Ok(())
}

/// Exact Shapley values by enumerating all `2^d` coalitions, with
/// `v(S)` the background mean of predictions on `x_S ∪ z_{¬S}`.
pub fn brute_force_shapley(
    model: &Ensemble,
    row: &[f64],
    background: &Dataset,
) -> Result<Attribution> {
    let bg = background_matrix(model, background)?;
    brute_force_shapley_matrix(model, row, &bg)
}

pub fn brute_force_shapley_matrix(
    model: &Ensemble,
    row: &[f64],
    background: &[f64],
) -> Result<Attribution> {
    let d = model.features.len();
    if d > BRUTE_FORCE_MAX_FEATURES {
        return Err(Error::InvalidArgument(format!(
            "brute-force Shapley enumerates 2^d coalitions; d = {d} exceeds {BRUTE_FORCE_MAX_FEATURES}"
        )));
    }
    check_inputs(d, row, background)?;
    let m = background.len() / d;
    let value: Vec<f64> = (0..1usize << d)
        .into_par_iter()
        .map(|mask| {
            let mut mixed = vec![0.0; d];
            let mut acc = 0.0;
            for z in background.chunks_exact(d) {
                for j in 0..d {
                    mixed[j] = if mask >> j & 1 == 1 { row[j] } else { z[j] };
                }
                acc += model.predict_row(&mixed);
            }
            acc / m as f64
        })
        .collect();
    let mut fact = vec![1.0f64; d + 1];
    for i in 1..=d {
        fact[i] = fact[i - 1] * i as f64;
    }
    let mut phi = vec![0.0; d];
    for (i, p) in phi.iter_mut().enumerate() {
        for mask in 0..1usize << d {
            if mask >> i & 1 == 1 {
                continue;
            }
            let s = mask.count_ones() as usize;
            let w = fact[s] * fact[d - s - 1] / fact[d];
            *p += w * (value[mask | 1 << i] - value[mask]);
        }
    }
    Ok(Attribution::new(model, value[0], value[(1 << d) - 1], phi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbtree::GbtConfig;

    fn stump(feature: usize, threshold: f64, lo: f64, hi: f64) -> Tree {
        Tree {
            nodes: vec![
                Node::Split {
                    feature,
                    threshold,
                    left: 1,
                    right: 2,
                    gain: 1.0,
                    cover: 2.0,
                },
                Node::Leaf {
                    weight: lo,
                    cover: 1.0,
                },
                Node::Leaf {
                    weight: hi,
                    cover: 1.0,
                },
            ],
        }
    }

    fn model(d: usize, trees: Vec<Tree>) -> Ensemble {
        Ensemble {
            base_score: 0.5,
            features: (0..d).map(|i| format!("x{i}")).collect(),
            trees,
            config: GbtConfig::default(),
        }
    }

    #[test]
    fn lone_feature_takes_full_marginal() {
        let m = model(1, vec![stump(0, 0.5, -1.0, 2.0)]);
        let bg = [0.0, 1.0, 0.2, 0.9];
        let a = shap_values_matrix(&m, &[1.0], &bg).unwrap();
        let mean_bg = bg.iter().map(|&z| m.predict_row(&[z])).sum::<f64>() / 4.0;
        assert!((a.contributions[0].value - (m.predict_row(&[1.0]) - mean_bg)).abs() < 1e-12);
        assert!(a.local_accuracy_error() < 1e-12);
    }

    #[test]
    fn symmetric_features_share_equally() {
        let m = model(2, vec![stump(0, 0.5, 0.0, 1.0), stump(1, 0.5, 0.0, 1.0)]);
        let bg = [0.0, 0.0, 0.2, 0.2];
        let a = shap_values_matrix(&m, &[1.0, 1.0], &bg).unwrap();
        let v = a.values();
        assert!((v[0] - v[1]).abs() < 1e-12);
    }

    #[test]
    fn interaction_split_matches_brute_force() {
        // depth-2 tree on two features
        let t = Tree {
            nodes: vec![
                Node::Split {
                    feature: 0,
                    threshold: 0.5,
                    left: 1,
                    right: 2,
                    gain: 1.0,
                    cover: 4.0,
                },
                Node::Leaf {
                    weight: 1.0,
                    cover: 2.0,
                },
                Node::Split {
                    feature: 1,
                    threshold: 0.5,
                    left: 3,
                    right: 4,
                    gain: 1.0,
                    cover: 2.0,
                },
                Node::Leaf {
                    weight: -2.0,
                    cover: 1.0,
                },
                Node::Leaf {
                    weight: 5.0,
                    cover: 1.0,
                },
            ],
        };
        let m = model(3, vec![t]);
        let bg = [0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.7, 1.0, 0.0];
        let row = [1.0, 1.0, 1.0];
        let fast = shap_values_matrix(&m, &row, &bg).unwrap();
        let slow = brute_force_shapley_matrix(&m, &row, &bg).unwrap();
        for (a, b) in fast.values().iter().zip(slow.values()) {
            assert!((a - b).abs() < 1e-12, "{fast:?} {slow:?}");
        }
        // unused feature is a dummy
        assert_eq!(fast.values()[2], 0.0);
    }

    #[test]
    fn constant_model_has_zero_attributions() {
        let m = model(3, vec![]);
        let a = brute_force_shapley_matrix(&m, &[1.0, 2.0, 3.0], &[0.0; 6]).unwrap();
        assert!(a.values().iter().all(|&v| v == 0.0));
        assert_eq!(a.base_value, 0.5);
    }

    #[test]
    fn guards() {
        let m = model(17, vec![]);
        assert!(brute_force_shapley_matrix(&m, &[0.0; 17], &[0.0; 17]).is_err());
        let m = model(1, vec![]);
        assert!(matches!(
            shap_values_matrix(&m, &[0.0], &[]),
            Err(Error::Empty(_))
        ));
    }
}
