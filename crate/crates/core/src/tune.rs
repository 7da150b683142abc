//! K-fold cross-validation and random hyperparameter search minimizing the
//! mean cross-validated RMSE.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gbtree::config::{
    COLSAMPLE_RANGE, GAMMA_RANGE, LAMBDA_L1_RANGE, LAMBDA_L2_RANGE, LEARNING_RATE_RANGE,
    MAX_BIN_RANGE, MAX_DEPTH_RANGE, MIN_CHILD_WEIGHT_RANGE, SUBSAMPLE_RANGE,
};
use crate::gbtree::{fit_matrix, GbtConfig};
use crate::rng;

pub const DEFAULT_TRIALS: usize = 60;
pub const DEFAULT_FOLDS: usize = 10;
/// Boosting rounds of every searched configuration.
pub const DEFAULT_SEARCH_ROUNDS: usize = 200;

/// Bounds of one search dimension. Samples are uniform on `[lo, hi]`, or
/// uniform in `ln` space when `log` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dim {
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub log: bool,
}

impl Dim {
    pub const fn linear(lo: f64, hi: f64) -> Self {
        Self { lo, hi, log: false }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::Config(format!(
                "search dimension {name}: need lo < hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        if self.log && self.lo <= 0.0 {
            return Err(Error::Config(format!(
                "search dimension {name}: log sampling needs lo > 0"
            )));
        }
        Ok(())
    }

    fn sample(&self, r: &mut rng::Rng) -> f64 {
        let u: f64 = r.gen();
        if self.log {
            (self.lo.ln() + u * (self.hi.ln() - self.lo.ln())).exp()
        } else {
            self.lo + u * (self.hi - self.lo)
        }
    }

    fn sample_int(&self, r: &mut rng::Rng) -> usize {
        self.sample(r).round().clamp(self.lo, self.hi) as usize
    }
}

/// Per-hyperparameter search bounds. `max_depth` and `max_bin` are integer
/// dimensions (sampled continuously, then rounded); `n_rounds` is fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSpace {
    pub learning_rate: Dim,
    pub max_depth: Dim,
    pub subsample: Dim,
    pub colsample_bytree: Dim,
    pub lambda_l1: Dim,
    pub lambda_l2: Dim,
    pub max_bin: Dim,
    pub min_child_weight: Dim,
    pub gamma: Dim,
    pub n_rounds: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        let f = |(lo, hi): (f64, f64)| Dim::linear(lo, hi);
        let i = |(lo, hi): (usize, usize)| Dim::linear(lo as f64, hi as f64);
        Self {
            learning_rate: f(LEARNING_RATE_RANGE),
            max_depth: i(MAX_DEPTH_RANGE),
            subsample: f(SUBSAMPLE_RANGE),
            colsample_bytree: f(COLSAMPLE_RANGE),
            lambda_l1: f(LAMBDA_L1_RANGE),
            lambda_l2: f(LAMBDA_L2_RANGE),
            max_bin: i(MAX_BIN_RANGE),
            min_child_weight: f(MIN_CHILD_WEIGHT_RANGE),
            gamma: f(GAMMA_RANGE),
            n_rounds: DEFAULT_SEARCH_ROUNDS,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        for (name, d) in self.dims() {
            d.validate(name)?;
        }
        if self.n_rounds == 0 {
            return Err(Error::Config("search n_rounds must be at least 1".into()));
        }
        Ok(())
    }

    fn dims(&self) -> [(&'static str, &Dim); 9] {
        [
            ("learning_rate", &self.learning_rate),
            ("max_depth", &self.max_depth),
            ("subsample", &self.subsample),
            ("colsample_bytree", &self.colsample_bytree),
            ("lambda_l1", &self.lambda_l1),
            ("lambda_l2", &self.lambda_l2),
            ("max_bin", &self.max_bin),
            ("min_child_weight", &self.min_child_weight),
            ("gamma", &self.gamma),
        ]
    }

    /// Draws one configuration; all dimensions are sampled in a fixed order.
    pub fn sample(&self, seed: u64) -> GbtConfig {
        let mut r = rng::seeded(seed);
        GbtConfig {
            learning_rate: self.learning_rate.sample(&mut r),
            max_depth: self.max_depth.sample_int(&mut r),
            subsample: self.subsample.sample(&mut r),
            colsample_bytree: self.colsample_bytree.sample(&mut r),
            lambda_l1: self.lambda_l1.sample(&mut r),
            lambda_l2: self.lambda_l2.sample(&mut r),
            max_bin: self.max_bin.sample_int(&mut r),
            min_child_weight: self.min_child_weight.sample(&mut r),
            gamma: self.gamma.sample(&mut r),
            n_rounds: self.n_rounds,
            seed,
        }
    }
}

/// Outcome of cross-validating one configuration. A failed trial has an
/// empty fold list, no mean and a recorded reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub index: usize,
    pub seed: u64,
    pub config: GbtConfig,
    pub fold_rmse: Vec<f64>,
    pub mean_rmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl TrialResult {
    fn failed(index: usize, seed: u64, config: GbtConfig, reason: String) -> Self {
        Self {
            index,
            seed,
            config,
            fold_rmse: Vec::new(),
            mean_rmse: None,
            failure: Some(reason),
        }
    }
}

/// Seeded shuffle of `0..n` cut into `k` contiguous folds; the first `n % k`
/// folds hold one extra row.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "k = {k}, need at least 2 folds"
        )));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the {n} available rows"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::seeded(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

/// Feature matrix and target extracted once for repeated fitting.
#[derive(Debug, Clone)]
pub struct CvData {
    pub features: Vec<String>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl CvData {
    pub fn new(data: &Dataset, features: &[String], target: &str) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InvalidArgument("feature set is empty".into()));
        }
        Ok(Self {
            features: features.to_vec(),
            x: data.matrix(features)?,
            y: data.column_by_name(target)?,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    fn gather(&self, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let d = self.features.len();
        let mut x = Vec::with_capacity(rows.len() * d);
        let mut y = Vec::with_capacity(rows.len());
        for &r in rows {
            x.extend_from_slice(&self.x[r * d..(r + 1) * d]);
            y.push(self.y[r]);
        }
        (x, y)
    }

    /// Test RMSE of each fold after fitting on the remaining folds.
    pub fn fold_rmse(&self, config: &GbtConfig, folds: &[Vec<usize>]) -> Result<Vec<f64>> {
        let mut in_fold = vec![usize::MAX; self.n_rows()];
        for (f, rows) in folds.iter().enumerate() {
            for &r in rows {
                in_fold[r] = f;
            }
        }
        let d = self.features.len();
        folds
            .iter()
            .enumerate()
            .map(|(f, test_rows)| {
                let train_rows: Vec<usize> =
                    (0..self.n_rows()).filter(|&r| in_fold[r] != f).collect();
                let (x, y) = self.gather(&train_rows);
                let (model, _) = fit_matrix(&x, &self.features, &y, config)?;
                let (xt, yt) = self.gather(test_rows);
                let sse: f64 = xt
                    .chunks_exact(d)
                    .zip(&yt)
                    .map(|(row, t)| (model.predict_row(row) - t).powi(2))
                    .sum();
                Ok((sse / yt.len() as f64).sqrt())
            })
            .collect()
    }
}

/// Seed of the fold partition shared by all trials of a search.
pub fn fold_seed(seed: u64) -> u64 {
    rng::derive_named(seed, "folds")
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Cross-validates one configuration on the folds a search with `seed` would use.
pub fn cross_validate(
    config: &GbtConfig,
    data: &Dataset,
    features: &[String],
    target: &str,
    k: usize,
    seed: u64,
) -> Result<TrialResult> {
    let cv = CvData::new(data, features, target)?;
    let folds = kfold_indices(cv.n_rows(), k, fold_seed(seed))?;
    let fold_rmse = cv.fold_rmse(config, &folds)?;
    Ok(TrialResult {
        index: 0,
        seed: config.seed,
        config: config.clone(),
        mean_rmse: Some(mean(&fold_rmse)),
        fold_rmse,
        failure: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: TrialResult,
    pub trials: Vec<TrialResult>,
}

/// Samples `n_trials` configurations (trial `i` uses seed
/// `derive_seed(seed, i)`), cross-validates each on one shared set of folds
/// and returns the lowest mean RMSE, earliest trial winning ties.
pub fn random_search(
    space: &SearchSpace,
    n_trials: usize,
    data: &Dataset,
    features: &[String],
    target: &str,
    k: usize,
    seed: u64,
) -> Result<SearchOutcome> {
    let cv = CvData::new(data, features, target)?;
    random_search_on(space, n_trials, &cv, k, seed)
}

pub fn random_search_on(
    space: &SearchSpace,
    n_trials: usize,
    cv: &CvData,
    k: usize,
    seed: u64,
) -> Result<SearchOutcome> {
    space.validate()?;
    let configs: Vec<GbtConfig> = (0..n_trials as u64)
        .map(|i| space.sample(rng::derive_seed(seed, i)))
        .collect();
    evaluate_configs(&configs, cv, k, seed)
}

/// Cross-validates given configurations as trials `0..configs.len()`.
pub fn evaluate_configs(
    configs: &[GbtConfig],
    cv: &CvData,
    k: usize,
    seed: u64,
) -> Result<SearchOutcome> {
    if configs.is_empty() {
        return Err(Error::InvalidArgument("n_trials must be at least 1".into()));
    }
    let folds = kfold_indices(cv.n_rows(), k, fold_seed(seed))?;
    let trials: Vec<TrialResult> = configs
        .par_iter()
        .enumerate()
        .map(|(index, config)| {
            let outcome = config.validate().and_then(|_| cv.fold_rmse(config, &folds));
            match outcome {
                Ok(fold_rmse) => TrialResult {
                    index,
                    seed: config.seed,
                    config: config.clone(),
                    mean_rmse: Some(mean(&fold_rmse)),
                    fold_rmse,
                    failure: None,
                },
                Err(e) => {
                    log::warn!("trial {index} failed: {e}");
                    TrialResult::failed(index, config.seed, config.clone(), e.to_string())
                }
            }
        })
        .collect();
    let best = best_trial(&trials)
        .cloned()
        .ok_or_else(|| Error::AllTrialsFailed(trials.clone()))?;
    Ok(SearchOutcome { best, trials })
}

/// Lowest mean RMSE, first in log order on ties; `None` if every trial failed.
pub fn best_trial(trials: &[TrialResult]) -> Option<&TrialResult> {
    let mut best: Option<&TrialResult> = None;
    for t in trials {
        if let Some(m) = t.mean_rmse {
            if best.is_none_or(|b| m < b.mean_rmse.unwrap_or(f64::INFINITY)) {
                best = Some(t);
            }
        }
    }
    best
}

/// One JSON object per line, in trial order.
pub fn write_trial_log<W: Write>(trials: &[TrialResult], mut writer: W) -> Result<()> {
    for t in trials {
        serde_json::to_writer(&mut writer, t)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trial_log<R: BufRead>(reader: R) -> Result<Vec<TrialResult>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t = serde_json::from_str(&line).map_err(|e| Error::Json {
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        out.push(t);
    }
    Ok(out)
}
