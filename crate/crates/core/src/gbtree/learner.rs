//! Depth-wise tree growth for squared-error boosting over binned features.

use rand::seq::index::sample;

use super::binning::BinnedMatrix;
use super::tree::{Node, Tree};
use super::{leaf_weight, split_gain, Ensemble, GbtConfig};
use crate::error::{Error, Result};
use crate::rng;

/// Fits an ensemble on a row-major `n × d` matrix whose columns are
/// `features`. Returns the model and the training MSE before the first round
/// and after every round.
pub fn fit_matrix(
    x: &[f64],
    features: &[String],
    y: &[f64],
    config: &GbtConfig,
) -> Result<(Ensemble, Vec<f64>)> {
    config.validate()?;
    let d = features.len();
    if d == 0 {
        return Err(Error::InvalidArgument("feature set is empty".into()));
    }
    let n = y.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    if x.len() != n * d {
        return Err(Error::InvalidArgument(format!(
            "matrix has {} cells, expected {n} × {d}",
            x.len()
        )));
    }
    let binned = BinnedMatrix::new(x, n, d, config.max_bin);
    let base_score = y.iter().sum::<f64>() / n as f64;
    let mut pred = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut trace = Vec::with_capacity(config.n_rounds + 1);
    trace.push(mse(&pred, y));

    let n_rows_sampled = ((config.subsample * n as f64).round() as usize).clamp(1, n);
    let n_feat_sampled = ((config.colsample_bytree * d as f64).round() as usize).clamp(1, d);
    let mut r = rng::seeded(config.seed);
    let mut trees = Vec::with_capacity(config.n_rounds);

    // Entries `row << 16 | bin` of each feature ordered by (bin, row), computed once.
    let orders: Vec<Vec<u64>> = (0..d)
        .map(|f| {
            let mut o: Vec<u64> = (0..n).map(|i| pack(i, binned.get(i, f))).collect();
            o.sort_unstable_by_key(|&e| (e & BIN_MASK, e >> 16));
            o
        })
        .collect();
    let mut in_sample = vec![true; n];
    let mut lists: Vec<u64> = Vec::with_capacity(n_rows_sampled * d);
    let mut go_left = vec![false; n];
    let mut scratch: Vec<u64> = Vec::with_capacity(n);

    for _ in 0..config.n_rounds {
        for i in 0..n {
            grad[i] = pred[i] - y[i];
        }
        if n_rows_sampled < n {
            in_sample.fill(false);
            for i in sample(&mut r, n, n_rows_sampled) {
                in_sample[i] = true;
            }
        }
        let feats: Vec<usize> = if n_feat_sampled < d {
            let mut v = sample(&mut r, d, n_feat_sampled).into_vec();
            v.sort_unstable();
            v
        } else {
            (0..d).collect()
        };
        lists.clear();
        for &f in &feats {
            lists.extend(orders[f].iter().copied().filter(|&e| in_sample[row_of(e)]));
        }

        // squared loss: every hessian is 1, so H is a row count
        let g_sum: f64 = (0..n).filter(|&i| in_sample[i]).map(|i| grad[i]).sum();
        let h_sum = n_rows_sampled as f64;
        let mut grower = Grower {
            data: &binned,
            grad: &grad,
            features: &feats,
            cfg: config,
            stride: n_rows_sampled,
            lists: &mut lists,
            go_left: &mut go_left,
            scratch: &mut scratch,
            nodes: Vec::new(),
            cut_bins: Vec::new(),
        };
        grower.grow(0, n_rows_sampled, g_sum, h_sum, 0);
        let (nodes, cut_bins) = (grower.nodes, grower.cut_bins);
        let tree = Tree { nodes };
        for (i, p) in pred.iter_mut().enumerate() {
            *p += binned_predict(&tree, &cut_bins, &binned, i);
        }
        trace.push(mse(&pred, y));
        trees.push(tree);
    }

    Ok((
        Ensemble {
            base_score,
            features: features.to_vec(),
            trees,
            config: config.clone(),
        },
        trace,
    ))
}

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter()
        .zip(y)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / y.len() as f64
}

fn binned_predict(tree: &Tree, cut_bins: &[u16], data: &BinnedMatrix, row: usize) -> f64 {
    let mut i = 0;
    loop {
        match &tree.nodes[i] {
            Node::Leaf { weight, .. } => return *weight,
            Node::Split {
                feature,
                left,
                right,
                ..
            } => {
                i = if data.get(row, *feature) <= cut_bins[i] {
                    *left
                } else {
                    *right
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    bin: u16,
    gain: f64,
    g_left: f64,
    h_left: f64,
}

/// Grows one tree. Every sampled feature keeps the node's rows ordered by
/// bin in `lists[k * stride + start .. k * stride + end]`; a split stably
/// partitions every list, so each node sees its rows in bin order without
/// re-sorting. Candidate splits are the boundaries between occupied bins,
/// which is exactly the candidate set of a per-node histogram scan.
struct Grower<'a> {
    data: &'a BinnedMatrix,
    grad: &'a [f64],
    features: &'a [usize],
    cfg: &'a GbtConfig,
    stride: usize,
    lists: &'a mut Vec<u64>,
    go_left: &'a mut Vec<bool>,
    scratch: &'a mut Vec<u64>,
    nodes: Vec<Node>,
    /// Split bin per node (unused for leaves): bins `≤ cut` go left.
    cut_bins: Vec<u16>,
}

impl Grower<'_> {
    /// Grows the subtree over list positions `start..end` and returns its root index.
    fn grow(&mut self, start: usize, end: usize, g: f64, h: f64, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            weight: 0.0,
            cover: h,
        });
        self.cut_bins.push(0);

        let splittable =
            depth < self.cfg.max_depth && end - start >= 2 && h >= 2.0 * self.cfg.min_child_weight;
        let best = if splittable {
            self.best_split(start, end, g, h)
        } else {
            None
        };
        let Some(best) = best else {
            let weight =
                leaf_weight(g, h, self.cfg.lambda_l1, self.cfg.lambda_l2) * self.cfg.learning_rate;
            self.nodes[id] = Node::Leaf { weight, cover: h };
            return id;
        };

        let mid = self.partition(start, end, best.feature, best.bin);
        let (g_l, h_l) = (best.g_left, best.h_left);
        let left = self.grow(start, mid, g_l, h_l, depth + 1);
        let right = self.grow(mid, end, g - g_l, h - h_l, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: self.data.features[best.feature].cuts[best.bin as usize],
            left,
            right,
            gain: best.gain,
            cover: h,
        };
        self.cut_bins[id] = best.bin;
        id
    }

    fn best_split(&self, start: usize, end: usize, g: f64, h: f64) -> Option<Candidate> {
        let mut best = None;
        for (k, &f) in self.features.iter().enumerate() {
            let rows = &self.lists[k * self.stride + start..k * self.stride + end];
            let mut g_l = 0.0;
            for (idx, w) in rows.windows(2).enumerate() {
                g_l += self.grad[row_of(w[0])];
                let bin = bin_of(w[0]);
                if bin_of(w[1]) != bin {
                    self.consider(&mut best, f, bin, g_l, (idx + 1) as f64, g, h);
                }
            }
        }
        self.finish(best, g, h)
    }

    /// Stably partitions every feature list of the node; returns the split point.
    fn partition(&mut self, start: usize, end: usize, feature: usize, bin: u16) -> usize {
        let k_split = self
            .features
            .iter()
            .position(|&f| f == feature)
            .expect("split feature is sampled");
        let base = k_split * self.stride;
        let mut n_left = 0;
        for &e in &self.lists[base + start..base + end] {
            let left = bin_of(e) <= bin;
            self.go_left[row_of(e)] = left;
            n_left += usize::from(left);
        }
        for k in 0..self.features.len() {
            let seg = &mut self.lists[k * self.stride + start..k * self.stride + end];
            self.scratch.clear();
            let mut w = 0;
            for i in 0..seg.len() {
                let e = seg[i];
                if self.go_left[row_of(e)] {
                    seg[w] = e;
                    w += 1;
                } else {
                    self.scratch.push(e);
                }
            }
            seg[w..].copy_from_slice(self.scratch);
        }
        start + n_left
    }

    /// Children score `S(G_L)²/(H_L+λ2) + S(G_R)²/(H_R+λ2)`; the gain is a
    /// monotone function of it for a fixed parent.
    #[inline]
    fn consider(
        &self,
        best: &mut Option<Candidate>,
        feature: usize,
        bin: u16,
        g_l: f64,
        h_l: f64,
        g: f64,
        h: f64,
    ) {
        let h_r = h - h_l;
        let mcw = self.cfg.min_child_weight;
        if h_l < mcw || h_r < mcw {
            return;
        }
        let l1 = self.cfg.lambda_l1;
        let l2 = self.cfg.lambda_l2;
        let children = half_score(g_l, h_l, l1, l2) + half_score(g - g_l, h_r, l1, l2);
        // earlier (feature, bin) wins ties, including ties blurred by summation order
        if best.is_none_or(|b| children > b.gain + TIE_EPS * (1.0 + b.gain.abs())) {
            *best = Some(Candidate {
                feature,
                bin,
                gain: children,
                g_left: g_l,
                h_left: h_l,
            });
        }
    }

    /// Converts the winning children score into the split gain, keeping the
    /// split only when the gain is positive.
    fn finish(&self, best: Option<Candidate>, g: f64, h: f64) -> Option<Candidate> {
        let mut b = best?;
        b.gain = split_gain(
            b.g_left,
            b.h_left,
            g - b.g_left,
            h - b.h_left,
            self.cfg.lambda_l1,
            self.cfg.lambda_l2,
            self.cfg.gamma,
        );
        (b.gain > 0.0).then_some(b)
    }
}

const BIN_MASK: u64 = 0xffff;

/// Relative margin below which two candidate splits count as tied.
const TIE_EPS: f64 = 1e-12;

#[inline]
fn pack(row: usize, bin: u16) -> u64 {
    (row as u64) << 16 | u64::from(bin)
}

#[inline]
fn row_of(e: u64) -> usize {
    (e >> 16) as usize
}

#[inline]
fn bin_of(e: u64) -> u16 {
    (e & BIN_MASK) as u16
}

#[inline]
fn half_score(g: f64, h: f64, lambda_l1: f64, lambda_l2: f64) -> f64 {
    let denom = h + lambda_l2;
    if denom <= 0.0 {
        return 0.0;
    }
    let s = (g.abs() - lambda_l1).max(0.0);
    s * s / denom
}
