//! Regression performance indicators and the model-selection rule.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Targets with `|y| < PMAE_ZERO_EPS` are excluded from PMAE.
pub const PMAE_ZERO_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    /// Mean absolute percentage error over pairs with nonzero `y`; `None` when
    /// every pair was skipped.
    pub pmae_percent: Option<f64>,
    pub mse: f64,
    pub rmse: f64,
    pub maxae: f64,
    /// `None` when `y` is constant and the coefficient is undefined.
    pub r2: Option<f64>,
    pub m: usize,
    pub pmae_skipped: usize,
}

pub fn evaluate(y: &[f64], y_hat: &[f64]) -> Result<MetricsReport> {
    if y.len() != y_hat.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} observations, {} predictions",
            y.len(),
            y_hat.len()
        )));
    }
    let m = y.len();
    if m < 2 {
        return Err(Error::InsufficientData { needed: 2, got: m });
    }
    let mf = m as f64;
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut pct_sum = 0.0;
    let mut pct_n = 0usize;
    for (&t, &p) in y.iter().zip(y_hat) {
        let e = (t - p).abs();
        abs_sum += e;
        sq_sum += e * e;
        max_abs = max_abs.max(e);
        if t.abs() >= PMAE_ZERO_EPS {
            pct_sum += e / t.abs();
            pct_n += 1;
        }
    }
    let mean_y = y.iter().sum::<f64>() / mf;
    let ss_tot: f64 = y.iter().map(|t| (t - mean_y) * (t - mean_y)).sum();
    let mse = sq_sum / mf;
    let r2 = (ss_tot > 0.0).then(|| 1.0 - sq_sum / ss_tot);
    Ok(MetricsReport {
        mae: abs_sum / mf,
        pmae_percent: (pct_n > 0).then(|| 100.0 * pct_sum / pct_n as f64),
        mse,
        rmse: mse.sqrt(),
        maxae: max_abs,
        r2,
        m,
        pmae_skipped: m - pct_n,
    })
}

/// Acceptance gate on test metrics: `rmse < rmse_max` and `r2 > r2_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub rmse_max: f64,
    pub r2_min: f64,
}

impl Gate {
    pub fn passes(&self, report: &MetricsReport) -> bool {
        report.rmse < self.rmse_max && report.r2.is_some_and(|r2| r2 > self.r2_min)
    }
}

impl Default for Gate {
    fn default() -> Self {
        Self {
            rmse_max: 30.0,
            r2_min: 0.18,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledReports {
    pub label: String,
    pub train: Option<MetricsReport>,
    pub test: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Best first.
    pub ranked: Vec<String>,
    /// Labels passing the gate, in ranked order.
    pub passed: Vec<String>,
}

/// Orders candidates by test RMSE ascending, then test R² descending
/// (undefined R² last), then label, so the ranking is independent of input order.
pub fn compare_test(a: &LabeledReports, b: &LabeledReports) -> Ordering {
    a.test
        .rmse
        .total_cmp(&b.test.rmse)
        .then_with(|| match (a.test.r2, b.test.r2) {
            (Some(x), Some(y)) => y.total_cmp(&x),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        })
        .then_with(|| a.label.cmp(&b.label))
}

pub fn select_optimal(reports: &[LabeledReports], gate: Gate) -> Selection {
    let mut sorted: Vec<&LabeledReports> = reports.iter().collect();
    sorted.sort_by(|a, b| compare_test(a, b));
    Selection {
        ranked: sorted.iter().map(|r| r.label.clone()).collect(),
        passed: sorted
            .iter()
            .filter(|r| gate.passes(&r.test))
            .map(|r| r.label.clone())
            .collect(),
    }
}
