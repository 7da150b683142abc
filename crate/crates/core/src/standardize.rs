//! Per-column z-normalization, `z = (x − μ) / σ` with the `n − 1` sample
//! standard deviation.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::schema::ColumnKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub columns: Vec<ColumnStats>,
    /// Row count the statistics were fitted on.
    pub n: usize,
}

/// Mean and `n − 1` standard deviation, two-pass with a mean correction.
pub(crate) fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let rough = xs.iter().sum::<f64>() / n;
    let mean = rough + xs.iter().map(|x| x - rough).sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

pub fn fit_standardizer(data: &Dataset, columns: &[String]) -> Result<StandardizationParams> {
    let n = data.n_rows();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let mut stats = Vec::with_capacity(columns.len());
    for name in columns {
        let j = data.schema().require(name)?;
        if data.schema().columns[j].kind == ColumnKind::Target {
            return Err(Error::InvalidArgument(format!(
                "target column \"{name}\" is never standardized"
            )));
        }
        let (mean, sd) = mean_sd(&data.column(j));
        // Exact zero only: a column with any spread is standardizable.
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(Error::ZeroVariance(name.clone()));
        }
        stats.push(ColumnStats {
            name: name.clone(),
            mean,
            sd,
        });
    }
    Ok(StandardizationParams { columns: stats, n })
}

impl StandardizationParams {
    pub fn get(&self, name: &str) -> Option<&ColumnStats> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn standardize(&self, name: &str, x: f64) -> Result<f64> {
        let s = self.get(name).ok_or_else(|| {
            Error::InvalidArgument(format!("no standardization fitted for \"{name}\""))
        })?;
        Ok((x - s.mean) / s.sd)
    }

    pub fn restore(&self, name: &str, z: f64) -> Result<f64> {
        let s = self.get(name).ok_or_else(|| {
            Error::InvalidArgument(format!("no standardization fitted for \"{name}\""))
        })?;
        Ok(z * s.sd + s.mean)
    }

    /// Standardizes every fitted column of `data`; other columns pass through.
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        self.transform(data, |x, s| (x - s.mean) / s.sd)
    }

    /// Standardizes exactly `columns`, each of which must have fitted params.
    pub fn apply_columns(&self, data: &Dataset, columns: &[String]) -> Result<Dataset> {
        for c in columns {
            if self.get(c).is_none() {
                return Err(Error::InvalidArgument(format!(
                    "no standardization fitted for \"{c}\""
                )));
            }
        }
        let subset = StandardizationParams {
            columns: self
                .columns
                .iter()
                .filter(|s| columns.contains(&s.name))
                .cloned()
                .collect(),
            n: self.n,
        };
        subset.apply(data)
    }

    pub fn invert(&self, data: &Dataset) -> Result<Dataset> {
        self.transform(data, |z, s| z * s.sd + s.mean)
    }

    fn transform(&self, data: &Dataset, f: impl Fn(f64, &ColumnStats) -> f64) -> Result<Dataset> {
        let d = data.n_cols();
        let mut mapped: Vec<(usize, &ColumnStats)> = Vec::with_capacity(self.columns.len());
        for s in &self.columns {
            let j = data.schema().require(&s.name)?;
            if data.schema().columns[j].kind == ColumnKind::Target {
                return Err(Error::InvalidArgument(format!(
                    "target column \"{}\" is never standardized",
                    s.name
                )));
            }
            mapped.push((j, s));
        }
        let mut values = data.values().to_vec();
        for row in values.chunks_exact_mut(d) {
            for &(j, s) in &mapped {
                row[j] = f(row[j], s);
            }
        }
        Ok(data.with_values(values))
    }
}
