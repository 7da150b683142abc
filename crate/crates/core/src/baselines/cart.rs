//! CART regression trees with exact variance-reduction splits, and the
//! bagged, randomized and boosted ensembles built from them.

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbtree::{Node, Tree};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or too small.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Fraction of features considered at each split (at least one).
    pub max_features: f64,
    /// Draw one uniform threshold per feature instead of scanning all cuts.
    pub random_thresholds: bool,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: 1.0,
            random_thresholds: false,
        }
    }
}

impl TreeParams {
    fn validate(&self) -> Result<()> {
        if !(self.max_features > 0.0 && self.max_features <= 1.0) {
            return Err(Error::Config(format!(
                "max_features {} must lie in (0, 1]",
                self.max_features
            )));
        }
        if self.min_samples_leaf == 0 || self.min_samples_split < 2 {
            return Err(Error::Config(
                "need min_samples_leaf ≥ 1 and min_samples_split ≥ 2".into(),
            ));
        }
        Ok(())
    }
}

struct Builder<'a> {
    x: &'a [f64],
    y: &'a [f64],
    d: usize,
    params: &'a TreeParams,
    n_try: usize,
    rng: rng::Rng,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn value(&self, row: usize, f: usize) -> f64 {
        self.x[row * self.d + f]
    }

    fn grow(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let m = rows.len();
        let sum: f64 = rows.iter().map(|&r| self.y[r]).sum();
        let mean = sum / m as f64;
        self.nodes.push(Node::Leaf {
            weight: mean,
            cover: m as f64,
        });
        let depth_ok = self.params.max_depth.is_none_or(|md| depth < md);
        if !depth_ok || m < self.params.min_samples_split || m < 2 * self.params.min_samples_leaf {
            return id;
        }
        let Some((feature, threshold, gain)) = self.best_split(rows, sum) else {
            return id;
        };
        let mid = partition(rows, |&r| self.value(r, feature) < threshold);
        let (l, r) = rows.split_at_mut(mid);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
            gain,
            cover: m as f64,
        };
        id
    }

    /// Best `(feature, threshold, SSE reduction)` over the sampled features.
    fn best_split(&mut self, rows: &[usize], sum: f64) -> Option<(usize, f64, f64)> {
        let m = rows.len();
        let features: Vec<usize> = if self.n_try < self.d {
            let mut v = sample(&mut self.rng, self.d, self.n_try).into_vec();
            v.sort_unstable();
            v
        } else {
            (0..self.d).collect()
        };
        let min_leaf = self.params.min_samples_leaf;
        let parent = sum * sum / m as f64;
        let mut best: Option<(usize, f64, f64)> = None;
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(m);
        for f in features {
            pairs.clear();
            pairs.extend(rows.iter().map(|&r| (self.value(r, f), self.y[r])));
            if self.params.random_thresholds {
                let (lo, hi) = pairs
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
                        (a.min(p.0), b.max(p.0))
                    });
                if lo >= hi {
                    continue;
                }
                let t = self.rng.gen_range(lo..hi);
                let t = if t > lo { t } else { hi };
                let (mut s_l, mut n_l) = (0.0, 0usize);
                for &(v, y) in &pairs {
                    if v < t {
                        s_l += y;
                        n_l += 1;
                    }
                }
                if n_l < min_leaf || m - n_l < min_leaf {
                    continue;
                }
                let gain = s_l * s_l / n_l as f64 + (sum - s_l).powi(2) / (m - n_l) as f64 - parent;
                if best.is_none_or(|b| gain > b.2) {
                    best = Some((f, t, gain));
                }
                continue;
            }
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut s_l = 0.0;
            for i in 0..m - 1 {
                s_l += pairs[i].1;
                let n_l = i + 1;
                if pairs[i].0 == pairs[i + 1].0 || n_l < min_leaf || m - n_l < min_leaf {
                    continue;
                }
                let gain = s_l * s_l / n_l as f64 + (sum - s_l).powi(2) / (m - n_l) as f64 - parent;
                if best.is_none_or(|b| gain > b.2 + 1e-12 * (1.0 + b.2.abs())) {
                    let (a, b) = (pairs[i].0, pairs[i + 1].0);
                    let mid = a + (b - a) / 2.0;
                    best = Some((f, if mid > a { mid } else { b }, gain));
                }
            }
        }
        best.filter(|b| b.2 > 1e-12 * (1.0 + parent.abs()))
    }
}

fn partition<T, F: Fn(&T) -> bool>(v: &mut [T], pred: F) -> usize {
    let mut w = 0;
    for i in 0..v.len() {
        if pred(&v[i]) {
            v.swap(w, i);
            w += 1;
        }
    }
    w
}

/// Fits a CART tree on the given rows (repeats allowed) of a row-major matrix.
pub fn fit_tree(
    x: &[f64],
    y: &[f64],
    d: usize,
    rows: &[usize],
    params: &TreeParams,
    seed: u64,
) -> Result<Tree> {
    params.validate()?;
    if rows.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let mut b = Builder {
        x,
        y,
        d,
        params,
        n_try: ((params.max_features * d as f64).round() as usize).clamp(1, d),
        rng: rng::seeded(seed),
        nodes: Vec::new(),
    };
    let mut rows = rows.to_vec();
    b.grow(&mut rows, 0);
    Ok(Tree { nodes: b.nodes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub bootstrap: bool,
    /// Rows drawn per estimator as a fraction of the training set.
    pub max_samples: f64,
    pub tree: TreeParams,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            bootstrap: true,
            max_samples: 1.0,
            tree: TreeParams::default(),
        }
    }
}

/// Trees whose predictions are averaged. Estimator `i` draws from
/// `derive_seed(seed, i)`.
pub fn fit_forest(
    x: &[f64],
    y: &[f64],
    d: usize,
    params: &ForestParams,
    seed: u64,
) -> Result<Vec<Tree>> {
    let n = y.len();
    if params.n_estimators == 0 {
        return Err(Error::Config("n_estimators must be at least 1".into()));
    }
    if !(params.max_samples > 0.0 && params.max_samples <= 1.0) {
        return Err(Error::Config(format!(
            "max_samples {} must lie in (0, 1]",
            params.max_samples
        )));
    }
    let draw = ((params.max_samples * n as f64).round() as usize).clamp(1, n);
    (0..params.n_estimators as u64)
        .into_par_iter()
        .map(|i| {
            let s = rng::derive_seed(seed, i);
            let mut r = rng::seeded(s);
            let rows: Vec<usize> = if params.bootstrap {
                (0..draw).map(|_| r.gen_range(0..n)).collect()
            } else if draw == n {
                (0..n).collect()
            } else {
                let mut v = sample(&mut r, n, draw).into_vec();
                v.sort_unstable();
                v
            };
            fit_tree(x, y, d, &rows, &params.tree, rng::derive_seed(s, 1))
        })
        .collect()
}

pub fn forest_predict(trees: &[Tree], x: &[f64]) -> f64 {
    trees.iter().map(|t| t.predict(x)).sum::<f64>() / trees.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaBoostParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub tree: TreeParams,
}

impl Default for AdaBoostParams {
    fn default() -> Self {
        Self {
            n_estimators: 50,
            learning_rate: 1.0,
            tree: TreeParams {
                max_depth: Some(3),
                ..TreeParams::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostModel {
    pub trees: Vec<Tree>,
    pub weights: Vec<f64>,
}

impl AdaBoostModel {
    /// Weighted median of the estimators' predictions.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut p: Vec<(f64, f64)> = self
            .trees
            .iter()
            .zip(&self.weights)
            .map(|(t, &w)| (t.predict(x), w))
            .collect();
        p.sort_by(|a, b| a.0.total_cmp(&b.0));
        let half = 0.5 * p.iter().map(|q| q.1).sum::<f64>();
        let mut acc = 0.0;
        for (v, w) in &p {
            acc += w;
            if acc >= half {
                return *v;
            }
        }
        p.last().map_or(0.0, |q| q.0)
    }
}

/// AdaBoost.R2 with linear loss: each round fits a tree to a weighted
/// bootstrap sample and reweights rows by their relative error.
pub fn fit_adaboost_r2(
    x: &[f64],
    y: &[f64],
    d: usize,
    params: &AdaBoostParams,
    seed: u64,
) -> Result<AdaBoostModel> {
    let n = y.len();
    if params.n_estimators == 0 || !(params.learning_rate > 0.0) {
        return Err(Error::Config(
            "adaboost needs n_estimators ≥ 1 and learning_rate > 0".into(),
        ));
    }
    let mut w = vec![1.0 / n as f64; n];
    let mut r = rng::seeded(seed);
    let mut model = AdaBoostModel {
        trees: Vec::new(),
        weights: Vec::new(),
    };
    for i in 0..params.n_estimators {
        let dist = WeightedIndex::new(&w)
            .map_err(|e| Error::InvalidArgument(format!("sample weights: {e}")))?;
        let rows: Vec<usize> = (0..n).map(|_| dist.sample(&mut r)).collect();
        let tree = fit_tree(
            x,
            y,
            d,
            &rows,
            &params.tree,
            rng::derive_seed(seed, i as u64),
        )?;
        let err: Vec<f64> = (0..n)
            .map(|j| (tree.predict(&x[j * d..(j + 1) * d]) - y[j]).abs())
            .collect();
        let max_err = err.iter().copied().fold(0.0, f64::max);
        if max_err == 0.0 {
            model.trees.push(tree);
            model.weights.push(1.0);
            break;
        }
        let avg: f64 = err.iter().zip(&w).map(|(e, wi)| wi * e / max_err).sum();
        if avg >= 0.5 {
            if model.trees.is_empty() {
                model.trees.push(tree);
                model.weights.push(1.0);
            }
            break;
        }
        let beta = avg / (1.0 - avg);
        model.trees.push(tree);
        model.weights.push(params.learning_rate * (1.0 / beta).ln());
        if i + 1 < params.n_estimators {
            for (wi, e) in w.iter_mut().zip(&err) {
                *wi *= beta.powf((1.0 - e / max_err) * params.learning_rate);
            }
            let total: f64 = w.iter().sum();
            for wi in &mut w {
                *wi /= total;
            }
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unbounded_tree_interpolates_distinct_rows() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| (v * 1.3).sin()).collect();
        let rows: Vec<usize> = (0..20).collect();
        let t = fit_tree(&x, &y, 1, &rows, &TreeParams::default(), 0).unwrap();
        for i in 0..20 {
            assert!((t.predict(&[x[i]]) - y[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn stump_splits_at_step() {
        let x = [1.0, 2.0, 3.0, 10.0, 11.0, 12.0];
        let y = [0.0, 0.0, 0.0, 5.0, 5.0, 5.0];
        let p = TreeParams {
            max_depth: Some(1),
            ..TreeParams::default()
        };
        let t = fit_tree(&x, &y, 1, &[0, 1, 2, 3, 4, 5], &p, 0).unwrap();
        match &t.nodes[0] {
            Node::Split { threshold, .. } => assert_eq!(*threshold, 6.5),
            n => panic!("{n:?}"),
        }
    }

    #[test]
    fn one_unbootstrapped_estimator_is_the_base_tree() {
        let x: Vec<f64> = (0..40).map(|i| ((i * 37) % 17) as f64).collect();
        let y: Vec<f64> = (0..20).map(|i| x[2 * i] * 2.0 - x[2 * i + 1]).collect();
        let params = ForestParams {
            n_estimators: 1,
            bootstrap: false,
            ..ForestParams::default()
        };
        let forest = fit_forest(&x, &y, 2, &params, 5).unwrap();
        let rows: Vec<usize> = (0..20).collect();
        let base = fit_tree(&x, &y, 2, &rows, &TreeParams::default(), 0).unwrap();
        for i in 0..20 {
            let r = &x[2 * i..2 * i + 2];
            assert_eq!(forest_predict(&forest, r), base.predict(r));
        }
    }

    #[test]
    fn adaboost_fits_step() {
        let x: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| if v < 25.0 { 1.0 } else { 4.0 })
            .collect();
        let m = fit_adaboost_r2(&x, &y, 1, &AdaBoostParams::default(), 1).unwrap();
        assert!((m.predict_row(&[3.0]) - 1.0).abs() < 1e-9);
        assert!((m.predict_row(&[40.0]) - 4.0).abs() < 1e-9);
    }
}
