//! Fits several baseline kinds on one split and ranks them by test metrics.

use std::fmt::Write as _;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_baseline_matrix, BaselineKind, BaselineParams};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, select_optimal, Gate, LabeledReports, MetricsReport, Selection};
use crate::rng;

/// One model's train/test metrics. A row without test metrics is a failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub train: Option<MetricsReport>,
    pub test: Option<MetricsReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreselectReport {
    pub target: String,
    pub gate: Gate,
    /// Ranked rows first, then failed rows in input order.
    pub rows: Vec<ReportRow>,
    pub selection: Selection,
}

pub const CSV_HEADER: [&str; 13] = [
    "model",
    "train_MAE",
    "train_PMAE",
    "train_MSE",
    "train_RMSE",
    "train_MaxAE",
    "train_R2",
    "test_MAE",
    "test_PMAE",
    "test_MSE",
    "test_RMSE",
    "test_MaxAE",
    "test_R2",
];

impl PreselectReport {
    /// Ranks rows with [`select_optimal`] and applies `gate`.
    pub fn assemble(target: &str, rows: Vec<ReportRow>, gate: Gate) -> Self {
        let labeled: Vec<LabeledReports> = rows
            .iter()
            .filter_map(|r| {
                r.test.clone().map(|test| LabeledReports {
                    label: r.label.clone(),
                    train: r.train.clone(),
                    test,
                })
            })
            .collect();
        let selection = select_optimal(&labeled, gate);
        let mut ordered: Vec<ReportRow> = selection
            .ranked
            .iter()
            .filter_map(|l| {
                rows.iter()
                    .find(|r| &r.label == l && r.test.is_some())
                    .cloned()
            })
            .collect();
        ordered.extend(rows.into_iter().filter(|r| r.test.is_none()));
        Self {
            target: target.to_string(),
            gate,
            rows: ordered,
            selection,
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            let mut rec = vec![r.label.clone()];
            rec.extend(metric_cells(r.train.as_ref()));
            rec.extend(metric_cells(r.test.as_ref()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Aligned plain-text table with a pass mark per row.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "target: {}  gate: test RMSE < {}, test R2 > {}",
            self.target, self.gate.rmse_max, self.gate.r2_min
        );
        let _ = writeln!(
            out,
            "{:<28} {:>9} {:>9} {:>9} {:>7}   {:>9} {:>9} {:>9} {:>7}  pass",
            "model",
            "trn MAE",
            "trn RMSE",
            "trn MaxAE",
            "trn R2",
            "tst MAE",
            "tst RMSE",
            "tst MaxAE",
            "tst R2"
        );
        for r in &self.rows {
            let cols = |m: Option<&MetricsReport>| match m {
                Some(m) => format!(
                    "{:>9.3} {:>9.3} {:>9.3} {:>7}",
                    m.mae,
                    m.rmse,
                    m.maxae,
                    m.r2.map_or("-".to_string(), |v| format!("{v:.3}"))
                ),
                None => format!("{:>9} {:>9} {:>9} {:>7}", "-", "-", "-", "-"),
            };
            let pass = if self.selection.passed.contains(&r.label) {
                "yes"
            } else {
                "no"
            };
            let _ = write!(
                out,
                "{:<28} {}   {}  {pass}",
                r.label,
                cols(r.train.as_ref()),
                cols(r.test.as_ref())
            );
            if let Some(f) = &r.failure {
                let _ = write!(out, "  failed: {f}");
            }
            out.push('\n');
        }
        out
    }
}

fn metric_cells(m: Option<&MetricsReport>) -> Vec<String> {
    let f = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    match m {
        Some(m) => vec![
            f(Some(m.mae)),
            f(m.pmae_percent),
            f(Some(m.mse)),
            f(Some(m.rmse)),
            f(Some(m.maxae)),
            f(m.r2),
        ],
        None => vec![String::new(); 6],
    }
}

/// Reads rows in the [`CSV_HEADER`] layout, e.g. metrics of models trained
/// elsewhere. Blank cells are missing values; a side whose error metrics are
/// all blank is absent. Sample counts are unknown and recorded as 0.
pub fn read_report_csv<R: Read>(reader: R) -> Result<Vec<ReportRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::Schema(format!(
            "report header must be {}",
            CSV_HEADER.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let cell = |j: usize| -> Result<Option<f64>> {
            let s = rec.get(j).unwrap_or("").trim();
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|_| Error::Row {
                row_id: i as u64 + 1,
                column: CSV_HEADER[j].to_string(),
                message: format!("cannot parse \"{s}\" as a number"),
            })
        };
        let side = |o: usize| -> Result<Option<MetricsReport>> {
            let v: Vec<Option<f64>> = (o..o + 6).map(cell).collect::<Result<_>>()?;
            let (Some(mae), Some(mse), Some(rmse), Some(maxae)) = (v[0], v[2], v[3], v[4]) else {
                return Ok(None);
            };
            Ok(Some(MetricsReport {
                mae,
                pmae_percent: v[1],
                mse,
                rmse,
                maxae,
                r2: v[5],
                m: 0,
                pmae_skipped: 0,
            }))
        };
        rows.push(ReportRow {
            label: rec.get(0).unwrap_or("").to_string(),
            train: side(1)?,
            test: side(7)?,
            failure: None,
        });
    }
    Ok(rows)
}

/// Fits each kind on `train`, evaluates on both splits, appends `external`
/// rows and ranks everything under `gate`. A failing kind is recorded, not fatal.
#[allow(clippy::too_many_arguments)]
pub fn preselect(
    train: &Dataset,
    test: &Dataset,
    features: &[String],
    target: &str,
    kinds: &[BaselineKind],
    params: &BaselineParams,
    gate: Gate,
    seed: u64,
    external: Vec<ReportRow>,
) -> Result<PreselectReport> {
    if kinds.is_empty() && external.is_empty() {
        return Err(Error::InvalidArgument("no baseline kinds requested".into()));
    }
    let d = features.len();
    let (x_tr, y_tr) = (train.matrix(features)?, train.column_by_name(target)?);
    let (x_te, y_te) = (test.matrix(features)?, test.column_by_name(target)?);
    let mut rows: Vec<ReportRow> = kinds
        .par_iter()
        .map(|&kind| {
            let label = kind.name().to_string();
            let outcome = fit_baseline_matrix(
                kind,
                &x_tr,
                &y_tr,
                features,
                params,
                rng::derive_named(seed, kind.name()),
            )
            .and_then(|m| {
                let p_tr: Vec<f64> = x_tr.chunks_exact(d).map(|r| m.predict_row(r)).collect();
                let p_te: Vec<f64> = x_te.chunks_exact(d).map(|r| m.predict_row(r)).collect();
                Ok((evaluate(&y_tr, &p_tr)?, evaluate(&y_te, &p_te)?))
            });
            match outcome {
                Ok((tr, te)) => ReportRow {
                    label,
                    train: Some(tr),
                    test: Some(te),
                    failure: None,
                },
                Err(e) => {
                    log::warn!("baseline {label} failed: {e}");
                    ReportRow {
                        label,
                        train: None,
                        test: None,
                        failure: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    rows.extend(external);
    Ok(PreselectReport::assemble(target, rows, gate))
}
