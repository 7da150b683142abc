#![allow(dead_code)]

use mixforge_core::gbtree::{leaf_weight, split_gain, Node, Tree};

/// Exact greedy regression-tree booster used as a reference: every split
/// between adjacent distinct values of a node is evaluated directly, and the
/// threshold is the midpoint to the next distinct value of the whole column.
pub struct ExactBooster {
    pub learning_rate: f64,
    pub max_depth: usize,
    pub lambda_l1: f64,
    pub lambda_l2: f64,
    pub min_child_weight: f64,
    pub gamma: f64,
}

impl ExactBooster {
    /// Returns the base score and trees.
    pub fn fit(&self, x: &[Vec<f64>], y: &[f64], rounds: usize) -> (f64, Vec<Tree>) {
        let n = y.len();
        let base = y.iter().sum::<f64>() / n as f64;
        let mut pred = vec![base; n];
        let mut trees = Vec::new();
        let columns: Vec<Vec<f64>> = (0..x[0].len())
            .map(|f| {
                let mut c: Vec<f64> = x.iter().map(|r| r[f]).collect();
                c.sort_by(f64::total_cmp);
                c.dedup();
                c
            })
            .collect();
        for _ in 0..rounds {
            let grad: Vec<f64> = (0..n).map(|i| pred[i] - y[i]).collect();
            let mut nodes = Vec::new();
            let rows: Vec<usize> = (0..n).collect();
            self.grow(x, &grad, &columns, &rows, 0, &mut nodes);
            let tree = Tree { nodes };
            for i in 0..n {
                pred[i] += tree.predict(&x[i]);
            }
            trees.push(tree);
        }
        (base, trees)
    }

    fn grow(
        &self,
        x: &[Vec<f64>],
        grad: &[f64],
        columns: &[Vec<f64>],
        rows: &[usize],
        depth: usize,
        nodes: &mut Vec<Node>,
    ) -> usize {
        let id = nodes.len();
        let g: f64 = rows.iter().map(|&r| grad[r]).sum();
        let h = rows.len() as f64;
        nodes.push(Node::Leaf {
            weight: 0.0,
            cover: h,
        });
        let mut best: Option<(f64, usize, f64)> = None;
        if depth < self.max_depth && rows.len() >= 2 && h >= 2.0 * self.min_child_weight {
            for (f, col) in columns.iter().enumerate() {
                let mut local: Vec<f64> = rows.iter().map(|&r| x[r][f]).collect();
                local.sort_by(f64::total_cmp);
                local.dedup();
                for v in &local[..local.len().saturating_sub(1)] {
                    let pos = col.iter().position(|c| c == v).unwrap();
                    let threshold = col[pos] + (col[pos + 1] - col[pos]) / 2.0;
                    let left: Vec<usize> = rows
                        .iter()
                        .copied()
                        .filter(|&r| x[r][f] < threshold)
                        .collect();
                    let g_l: f64 = left.iter().map(|&r| grad[r]).sum();
                    let h_l = left.len() as f64;
                    if h_l < self.min_child_weight || h - h_l < self.min_child_weight {
                        continue;
                    }
                    let gain = split_gain(
                        g_l,
                        h_l,
                        g - g_l,
                        h - h_l,
                        self.lambda_l1,
                        self.lambda_l2,
                        self.gamma,
                    );
                    if best.is_none_or(|(b, _, _)| gain > b + 1e-12 * (1.0 + b.abs())) {
                        best = Some((gain, f, threshold));
                    }
                }
            }
        }
        match best {
            Some((gain, feature, threshold)) if gain > 0.0 => {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&r| x[r][feature] < threshold);
                let left = self.grow(x, grad, columns, &l, depth + 1, nodes);
                let right = self.grow(x, grad, columns, &r, depth + 1, nodes);
                nodes[id] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    gain,
                    cover: h,
                };
            }
            _ => {
                let weight = leaf_weight(g, h, self.lambda_l1, self.lambda_l2) * self.learning_rate;
                nodes[id] = Node::Leaf { weight, cover: h };
            }
        }
        id
    }
}

/// Structural equality with numeric tolerance.
pub fn trees_match(a: &Tree, b: &Tree, tol: f64) -> bool {
    a.nodes.len() == b.nodes.len()
        && a.nodes.iter().zip(&b.nodes).all(|pair| match pair {
            (
                Node::Split {
                    feature: f1,
                    threshold: t1,
                    left: l1,
                    right: r1,
                    gain: g1,
                    ..
                },
                Node::Split {
                    feature: f2,
                    threshold: t2,
                    left: l2,
                    right: r2,
                    gain: g2,
                    ..
                },
            ) => {
                f1 == f2
                    && t1 == t2
                    && l1 == l2
                    && r1 == r2
                    && (g1 - g2).abs() < tol * (1.0 + g1.abs())
            }
            (Node::Leaf { weight: w1, .. }, Node::Leaf { weight: w2, .. }) => (w1 - w2).abs() < tol,
            _ => false,
        })
}
