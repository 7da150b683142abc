//! Pearson correlation and greedy multicollinearity pruning.

use std::collections::HashSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Symmetric matrix of Pearson coefficients. Entries touching a zero-variance
/// column are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    values: Vec<Option<f64>>,
}

impl CorrelationMatrix {
    pub fn from_values(labels: Vec<String>, values: Vec<Option<f64>>) -> Result<Self> {
        let d = labels.len();
        if values.len() != d * d {
            return Err(Error::InvalidArgument(format!(
                "{} entries for a {d}×{d} matrix",
                values.len()
            )));
        }
        Ok(Self { labels, values })
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.dim() + j]
    }

    pub fn by_name(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.labels.iter().position(|l| l == a)?;
        let j = self.labels.iter().position(|l| l == b)?;
        self.get(i, j)
    }

    pub fn undefined_columns(&self) -> Vec<String> {
        (0..self.dim())
            .filter(|&i| self.get(i, i).is_none())
            .map(|i| self.labels[i].clone())
            .collect()
    }

    /// Square CSV with a label column; undefined entries are empty cells.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![String::new()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.dim() {
            let mut rec = vec![self.labels[i].clone()];
            rec.extend(
                (0..self.dim()).map(|j| self.get(i, j).map(|r| r.to_string()).unwrap_or_default()),
            );
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn correlation_matrix(data: &Dataset, columns: &[String]) -> Result<CorrelationMatrix> {
    if columns.len() < 2 {
        return Err(Error::InvalidArgument(
            "correlation needs at least two columns".into(),
        ));
    }
    if data.n_rows() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: data.n_rows(),
        });
    }
    let cols = columns
        .iter()
        .map(|c| data.column_by_name(c))
        .collect::<Result<Vec<_>>>()?;
    let d = cols.len();
    let defined: Vec<bool> = cols.iter().map(|c| c.iter().any(|&v| v != c[0])).collect();
    let mut values = vec![None; d * d];
    for i in 0..d {
        if !defined[i] {
            continue;
        }
        values[i * d + i] = Some(1.0);
        for j in i + 1..d {
            if !defined[j] {
                continue;
            }
            let r = pearson(&cols[i], &cols[j]);
            values[i * d + j] = r;
            values[j * d + i] = r;
        }
    }
    Ok(CorrelationMatrix {
        labels: columns.to_vec(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropRecord {
    pub column: String,
    /// The column it was paired with when dropped.
    pub partner: String,
    pub r: f64,
    /// Mean |r| of the dropped column to the other kept columns at drop time.
    pub mean_abs_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneOutcome {
    pub kept: Vec<String>,
    pub dropped: Vec<DropRecord>,
    /// Pairs above threshold left in place because both members were overridden.
    pub exempt_pairs: Vec<(String, String, f64)>,
}

/// Repeatedly takes the most correlated kept pair with `|r| > threshold` and
/// drops the member with the larger mean |r| to the other kept columns (larger
/// index on ties). Columns in `keep_overrides` are never dropped.
pub fn prune_multicollinear(
    corr: &CorrelationMatrix,
    threshold: f64,
    keep_overrides: &[String],
) -> Result<PruneOutcome> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold {threshold} must lie in (0, 1]"
        )));
    }
    let d = corr.dim();
    let abs = |i: usize, j: usize| corr.get(i, j).map_or(0.0, f64::abs);
    let overrides: HashSet<&str> = keep_overrides.iter().map(String::as_str).collect();
    let mut kept = vec![true; d];
    let mut exempt: HashSet<(usize, usize)> = HashSet::new();
    let mut dropped = Vec::new();

    loop {
        let mut worst: Option<(usize, usize, f64)> = None;
        for i in 0..d {
            if !kept[i] {
                continue;
            }
            for j in i + 1..d {
                if !kept[j] || exempt.contains(&(i, j)) {
                    continue;
                }
                let a = abs(i, j);
                if a > threshold && worst.is_none_or(|(_, _, w)| a > w) {
                    worst = Some((i, j, a));
                }
            }
        }
        let Some((i, j, _)) = worst else { break };
        let mean_abs = |k: usize| {
            let others: Vec<usize> = (0..d).filter(|&o| o != k && kept[o]).collect();
            others.iter().map(|&o| abs(k, o)).sum::<f64>() / others.len().max(1) as f64
        };
        let fixed_i = overrides.contains(corr.labels[i].as_str());
        let fixed_j = overrides.contains(corr.labels[j].as_str());
        let victim = match (fixed_i, fixed_j) {
            (true, true) => {
                exempt.insert((i, j));
                continue;
            }
            (true, false) => j,
            (false, true) => i,
            (false, false) => {
                if mean_abs(i) > mean_abs(j) {
                    i
                } else {
                    j
                }
            }
        };
        let partner = if victim == i { j } else { i };
        dropped.push(DropRecord {
            column: corr.labels[victim].clone(),
            partner: corr.labels[partner].clone(),
            r: corr.get(i, j).unwrap_or(0.0),
            mean_abs_r: mean_abs(victim),
        });
        kept[victim] = false;
    }

    let exempt_pairs = {
        let mut v: Vec<_> = exempt
            .into_iter()
            .filter(|&(i, j)| kept[i] && kept[j])
            .collect();
        v.sort_unstable();
        v.into_iter()
            .map(|(i, j)| {
                (
                    corr.labels[i].clone(),
                    corr.labels[j].clone(),
                    corr.get(i, j).unwrap_or(0.0),
                )
            })
            .collect()
    };
    Ok(PruneOutcome {
        kept: (0..d)
            .filter(|&i| kept[i])
            .map(|i| corr.labels[i].clone())
            .collect(),
        dropped,
        exempt_pairs,
    })
}
