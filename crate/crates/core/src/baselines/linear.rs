//! Linear baselines on centered data; the intercept is never penalized.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tune::kfold_indices;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coef: Vec<f64>,
    /// Penalty actually used (0 for OLS).
    pub lambda: f64,
}

impl LinearModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }
}

struct Centered {
    x: DMatrix<f64>,
    y: DVector<f64>,
    x_mean: Vec<f64>,
    y_mean: f64,
}

fn center(x: &[f64], y: &[f64], d: usize) -> Result<Centered> {
    let n = y.len();
    if n == 0 || d == 0 || x.len() != n * d {
        return Err(Error::InvalidArgument(format!(
            "design is {} cells for {n} rows × {d}",
            x.len()
        )));
    }
    let x_mean: Vec<f64> = (0..d)
        .map(|j| (0..n).map(|i| x[i * d + j]).sum::<f64>() / n as f64)
        .collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    Ok(Centered {
        x: DMatrix::from_fn(n, d, |i, j| x[i * d + j] - x_mean[j]),
        y: DVector::from_iterator(n, y.iter().map(|v| v - y_mean)),
        x_mean,
        y_mean,
    })
}

fn finish(c: &Centered, beta: DVector<f64>, lambda: f64) -> LinearModel {
    let coef: Vec<f64> = beta.iter().copied().collect();
    let intercept = c.y_mean - coef.iter().zip(&c.x_mean).map(|(b, m)| b * m).sum::<f64>();
    LinearModel {
        intercept,
        coef,
        lambda,
    }
}

/// Ordinary least squares; a rank-deficient design is an error.
pub fn fit_ols(x: &[f64], y: &[f64], d: usize) -> Result<LinearModel> {
    let c = center(x, y, d)?;
    let svd = c.x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-10 * (c.x.nrows().max(d) as f64);
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < d || smax == 0.0 {
        return Err(Error::Singular(format!(
            "least-squares design has rank {rank} < {d} features; use ridge regularization instead"
        )));
    }
    let beta = svd
        .solve(&c.y, tol)
        .map_err(|e| Error::Singular(format!("{e}; use ridge regularization instead")))?;
    Ok(finish(&c, beta, 0.0))
}

/// Solves `(XᵀX + λI) β = Xᵀy` on centered data.
pub fn fit_ridge(x: &[f64], y: &[f64], d: usize, lambda: f64) -> Result<LinearModel> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "ridge lambda {lambda} must be finite and ≥ 0"
        )));
    }
    let c = center(x, y, d)?;
    let gram = c.x.transpose() * &c.x + DMatrix::identity(d, d) * lambda;
    let rhs = c.x.transpose() * &c.y;
    let beta = gram
        .cholesky()
        .ok_or_else(|| {
            Error::Singular("ridge system is not positive definite; increase lambda".into())
        })?
        .solve(&rhs);
    Ok(finish(&c, beta, lambda))
}

/// Euclidean norm of `(XᵀX + λI) β − Xᵀy` on the centered training data.
pub fn ridge_residual(model: &LinearModel, x: &[f64], y: &[f64], d: usize) -> Result<f64> {
    let c = center(x, y, d)?;
    let beta = DVector::from_column_slice(&model.coef);
    let lhs = c.x.transpose() * (&c.x * &beta) + &beta * model.lambda;
    Ok((lhs - c.x.transpose() * &c.y).norm())
}

pub const LASSO_TOL: f64 = 1e-10;
pub const LASSO_MAX_ITER: usize = 100_000;

/// Coordinate descent for `(1/2n)‖y − Xβ − b‖² + α‖β‖₁`, stopping when no
/// coefficient moves more than `LASSO_TOL`.
pub fn fit_lasso(x: &[f64], y: &[f64], d: usize, alpha: f64) -> Result<LinearModel> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lasso alpha {alpha} must be finite and ≥ 0"
        )));
    }
    let c = center(x, y, d)?;
    let n = c.x.nrows() as f64;
    let z: Vec<f64> = (0..d).map(|j| c.x.column(j).norm_squared() / n).collect();
    let mut beta: DVector<f64> = DVector::zeros(d);
    let mut resid = c.y.clone();
    for _ in 0..LASSO_MAX_ITER {
        let mut max_step: f64 = 0.0;
        for j in 0..d {
            if z[j] == 0.0 {
                continue;
            }
            let col = c.x.column(j);
            let rho: f64 = col.dot(&resid) / n + z[j] * beta[j];
            let new = rho.signum() * (rho.abs() - alpha).max(0.0) / z[j];
            let step = new - beta[j];
            if step != 0.0 {
                resid.axpy(-step, &col, 1.0);
                beta[j] = new;
                max_step = max_step.max(step.abs());
            }
        }
        if max_step < LASSO_TOL {
            return Ok(finish(&c, beta, alpha));
        }
    }
    log::warn!("lasso did not reach tolerance {LASSO_TOL} in {LASSO_MAX_ITER} sweeps");
    Ok(finish(&c, beta, alpha))
}

/// 10 log-spaced penalties over `[1e-3, 1e3]`.
pub fn ridge_grid() -> Vec<f64> {
    (0..10)
        .map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / 9.0))
        .collect()
}

pub const RIDGE_CV_FOLDS: usize = 5;

/// Picks the grid penalty with the lowest mean k-fold RMSE (smallest λ on
/// ties) and refits on all rows.
pub fn fit_ridge_cv(x: &[f64], y: &[f64], d: usize, seed: u64) -> Result<LinearModel> {
    let n = y.len();
    let k = RIDGE_CV_FOLDS.min(n);
    let folds = kfold_indices(n, k, seed)?;
    let mut best = (f64::INFINITY, 0.0);
    for lambda in ridge_grid() {
        let mut total = 0.0;
        for test in &folds {
            let mut mask = vec![false; n];
            for &i in test {
                mask[i] = true;
            }
            let (mut xt, mut yt) = (Vec::new(), Vec::new());
            for i in (0..n).filter(|&i| !mask[i]) {
                xt.extend_from_slice(&x[i * d..(i + 1) * d]);
                yt.push(y[i]);
            }
            let m = fit_ridge(&xt, &yt, d, lambda)?;
            let sse: f64 = test
                .iter()
                .map(|&i| (m.predict_row(&x[i * d..(i + 1) * d]) - y[i]).powi(2))
                .sum();
            total += (sse / test.len() as f64).sqrt();
        }
        let mean = total / folds.len() as f64;
        if mean < best.0 {
            best = (mean, lambda);
        }
    }
    fit_ridge(x, y, d, best.1)
}
