//! Isolation Forest outlier scoring and contamination-quantile filtering.

use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng;

const EULER_GAMMA: f64 = 0.577_215_664_9;

pub const DEFAULT_TREES: usize = 100;
pub const DEFAULT_PSI: usize = 256;

/// Average path length of an unsuccessful BST search among `n` points.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum IsoNode {
    Split {
        feature: usize,
        value: f64,
        left: Box<IsoNode>,
        right: Box<IsoNode>,
    },
    Leaf {
        size: usize,
    },
}

impl IsoNode {
    pub fn height(&self) -> usize {
        match self {
            IsoNode::Leaf { .. } => 0,
            IsoNode::Split { left, right, .. } => 1 + left.height().max(right.height()),
        }
    }

    fn path_length(&self, x: &[f64]) -> f64 {
        let mut node = self;
        let mut depth = 0.0;
        loop {
            match node {
                IsoNode::Leaf { size } => return depth + average_path_length(*size),
                IsoNode::Split {
                    feature,
                    value,
                    left,
                    right,
                } => {
                    node = if x[*feature] < *value { left } else { right };
                    depth += 1.0;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForestModel {
    pub columns: Vec<String>,
    pub n_trees: usize,
    pub psi: usize,
    /// `c(ψ)`, the score normalizer.
    pub c_psi: f64,
    pub height_limit: usize,
    pub trees: Vec<IsoNode>,
}

pub fn fit_isolation_forest(
    data: &Dataset,
    columns: &[String],
    n_trees: usize,
    psi: usize,
    seed: u64,
) -> Result<IsolationForestModel> {
    if columns.is_empty() {
        return Err(Error::InvalidArgument(
            "isolation forest needs at least one column".into(),
        ));
    }
    if n_trees == 0 {
        return Err(Error::InvalidArgument("n_trees must be positive".into()));
    }
    let n = data.n_rows();
    if psi < 2 {
        return Err(Error::InvalidArgument(format!(
            "subsample size {psi} must be at least 2"
        )));
    }
    if psi > n {
        return Err(Error::InvalidArgument(format!(
            "subsample size {psi} exceeds row count {n}"
        )));
    }
    let x = data.matrix(columns)?;
    let d = columns.len();
    let height_limit = (psi as f64).log2().ceil() as usize;
    let trees = (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::seeded(rng::derive_seed(seed, t as u64));
            let idx = sample(&mut r, n, psi).into_vec();
            build(&x, d, idx, 0, height_limit, &mut r)
        })
        .collect();
    Ok(IsolationForestModel {
        columns: columns.to_vec(),
        n_trees,
        psi,
        c_psi: average_path_length(psi),
        height_limit,
        trees,
    })
}

fn build(
    x: &[f64],
    d: usize,
    idx: Vec<usize>,
    depth: usize,
    limit: usize,
    r: &mut rng::Rng,
) -> IsoNode {
    if idx.len() <= 1 || depth >= limit {
        return IsoNode::Leaf { size: idx.len() };
    }
    // Candidate features are those with spread inside the node.
    let mut candidates = Vec::with_capacity(d);
    for f in 0..d {
        let (lo, hi) = min_max(x, d, &idx, f);
        if lo < hi {
            candidates.push((f, lo, hi));
        }
    }
    if candidates.is_empty() {
        return IsoNode::Leaf { size: idx.len() };
    }
    let (feature, lo, hi) = candidates[r.gen_range(0..candidates.len())];
    let value = loop {
        let v = lo + r.gen::<f64>() * (hi - lo);
        if v > lo {
            break v;
        }
    };
    let (left, right): (Vec<usize>, Vec<usize>) =
        idx.into_iter().partition(|&i| x[i * d + feature] < value);
    IsoNode::Split {
        feature,
        value,
        left: Box::new(build(x, d, left, depth + 1, limit, r)),
        right: Box::new(build(x, d, right, depth + 1, limit, r)),
    }
}

fn min_max(x: &[f64], d: usize, idx: &[usize], f: usize) -> (f64, f64) {
    idx.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            let v = x[i * d + f];
            (lo.min(v), hi.max(v))
        })
}

impl IsolationForestModel {
    /// Mean path length `E[h(x)]` over the trees.
    pub fn mean_path_length(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn score_row(&self, x: &[f64]) -> f64 {
        2f64.powf(-self.mean_path_length(x) / self.c_psi)
    }
}

/// Scores in `(0, 1]`, higher meaning more anomalous.
pub fn score_anomalies(model: &IsolationForestModel, data: &Dataset) -> Result<Vec<f64>> {
    let x = data.matrix(&model.columns).map_err(|e| match e {
        Error::UnknownColumn(c) => Error::Schema(format!(
            "data lacks column \"{c}\" the isolation forest was fitted on"
        )),
        other => other,
    })?;
    let d = model.columns.len();
    Ok(x.par_chunks_exact(d)
        .map(|row| model.score_row(row))
        .collect())
}

/// Drops the `floor(contamination · n)` highest-scoring rows (earlier rows first
/// among equal scores). Returns the kept rows and the removed row ids.
pub fn filter_outliers(
    data: &Dataset,
    scores: &[f64],
    contamination: f64,
) -> Result<(Dataset, Vec<u64>)> {
    if !(0.0..0.5).contains(&contamination) {
        return Err(Error::InvalidArgument(format!(
            "contamination {contamination} must lie in [0, 0.5)"
        )));
    }
    let n = data.n_rows();
    if scores.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} scores for {n} rows",
            scores.len()
        )));
    }
    let k = (contamination * n as f64).floor() as usize;
    if k == 0 {
        return Ok((data.clone(), Vec::new()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let removed_pos: Vec<usize> = order[..k].to_vec();
    let removed: Vec<u64> = removed_pos.iter().map(|&p| data.row_ids()[p]).collect();
    let mut keep: Vec<bool> = vec![true; n];
    for p in removed_pos {
        keep[p] = false;
    }
    let kept_pos: Vec<usize> = (0..n).filter(|&i| keep[i]).collect();
    Ok((data.select_rows(&kept_pos)?, removed))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::Rng as _;

    use super::*;
    use crate::schema::{ColumnSpec, FeatureSchema};

    fn xy(points: &[(f64, f64)]) -> Dataset {
        let schema = Arc::new(
            FeatureSchema::new(
                "t",
                vec![
                    ColumnSpec::input("x", "", -1e9, 1e9),
                    ColumnSpec::input("y", "", -1e9, 1e9),
                ],
            )
            .unwrap(),
        );
        Dataset::from_rows(schema, points.iter().map(|&(a, b)| vec![a, b]).collect()).unwrap()
    }

    fn cols() -> Vec<String> {
        vec!["x".into(), "y".into()]
    }

    fn uniform_with_outlier(seed: u64) -> Dataset {
        let mut r = rng::seeded(seed);
        let mut pts: Vec<(f64, f64)> = (0..99).map(|_| (r.gen(), r.gen())).collect();
        pts.push((10.0, 10.0));
        xy(&pts)
    }

    #[test]
    fn normalizer_values() {
        assert_eq!(average_path_length(1), 0.0);
        assert_eq!(average_path_length(2), 1.0);
        let c256 = 2.0 * (255f64.ln() + 0.5772156649) - 2.0 * 255.0 / 256.0;
        assert!((average_path_length(256) - c256).abs() < 1e-12);
        assert!((average_path_length(256) - 10.2448).abs() < 1e-4);
    }

    #[test]
    fn default_size_forest() {
        let mut r = rng::seeded(1);
        let pts: Vec<(f64, f64)> = (0..300).map(|_| (r.gen(), r.gen())).collect();
        let m = fit_isolation_forest(&xy(&pts), &cols(), 100, 256, 7).unwrap();
        assert_eq!(m.trees.len(), 100);
        assert!((m.c_psi - 10.2448).abs() < 1e-4);
        assert!(m.trees.iter().all(|t| t.height() <= 8));
    }

    #[test]
    fn psi_two_gives_stumps() {
        let d = uniform_with_outlier(3);
        let m = fit_isolation_forest(&d, &cols(), 20, 2, 1).unwrap();
        assert_eq!(m.c_psi, 1.0);
        assert!(m.trees.iter().all(|t| t.height() <= 1));
    }

    #[test]
    fn psi_larger_than_n_rejected() {
        let d = xy(&[(0.0, 0.0), (1.0, 1.0)]);
        assert!(fit_isolation_forest(&d, &cols(), 10, 3, 0).is_err());
    }

    #[test]
    fn seeded_forest_is_reproducible() {
        let d = uniform_with_outlier(5);
        let a = fit_isolation_forest(&d, &cols(), 30, 64, 11).unwrap();
        let b = fit_isolation_forest(&d, &cols(), 30, 64, 11).unwrap();
        assert_eq!(a, b);
        let c = fit_isolation_forest(&d, &cols(), 30, 64, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn score_at_expected_path_is_half() {
        let d = uniform_with_outlier(5);
        let m = fit_isolation_forest(&d, &cols(), 10, 64, 1).unwrap();
        assert!((2f64.powf(-m.c_psi / m.c_psi) - 0.5).abs() < 1e-15);
        // a zero-length path would give 1
        assert_eq!(2f64.powf(-0.0 / m.c_psi), 1.0);
    }

    #[test]
    fn planted_outlier_scores_highest() {
        let d = uniform_with_outlier(21);
        let psi = 256.min(d.n_rows());
        let m = fit_isolation_forest(&d, &cols(), 100, psi, 2).unwrap();
        let s = score_anomalies(&m, &d).unwrap();
        let best = (0..s.len()).max_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap();
        assert_eq!(best, 99);
        assert!(s.iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn identical_rows_score_identically() {
        let mut pts: Vec<(f64, f64)> = (0..50).map(|i| (i as f64, (i * 7 % 13) as f64)).collect();
        pts.push((3.0, 8.0));
        pts.push((3.0, 8.0));
        let d = xy(&pts);
        let m = fit_isolation_forest(&d, &cols(), 50, 32, 4).unwrap();
        let s = score_anomalies(&m, &d).unwrap();
        assert_eq!(s[50], s[51]);
    }

    #[test]
    fn schema_mismatch_rejected() {
        let d = uniform_with_outlier(1);
        let mut m = fit_isolation_forest(&d, &cols(), 5, 16, 1).unwrap();
        m.columns[1] = "z".into();
        assert!(matches!(score_anomalies(&m, &d), Err(Error::Schema(_))));
    }

    #[test]
    fn removal_counts() {
        let d = uniform_with_outlier(1);
        let scores: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let (kept, removed) = filter_outliers(&d, &scores, 0.10).unwrap();
        assert_eq!(removed.len(), 10);
        assert_eq!(kept.n_rows(), 90);
        assert_eq!(removed[0], 99);
        let (same, none) = filter_outliers(&d, &scores, 0.0).unwrap();
        assert!(none.is_empty());
        assert_eq!(same, d);
        assert!(filter_outliers(&d, &scores, 0.5).is_err());
    }

    #[test]
    fn ties_removed_in_row_order() {
        let d = uniform_with_outlier(1);
        let scores = vec![0.5; 100];
        let (_, removed) = filter_outliers(&d, &scores, 0.05).unwrap();
        assert_eq!(removed, vec![0, 1, 2, 3, 4]);
    }
}
