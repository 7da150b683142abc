//! Pre-selection model zoo and the harness comparing it on a train/test split.

pub mod cart;
pub mod harness;
pub mod linear;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cart::{AdaBoostModel, AdaBoostParams, ForestParams, TreeParams};
pub use harness::{preselect, read_report_csv, PreselectReport, ReportRow};
pub use linear::LinearModel;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gbtree::{fit_matrix, Ensemble, GbtConfig, Tree};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    OlsLinear,
    Ridge,
    RidgeCv,
    Lasso,
    DecisionTree,
    RandomForest,
    ExtraTrees,
    Bagging,
    AdaboostR2,
    GradientBoosting,
    LeastSquaresBoosting,
    VotingMean,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 12] = [
        Self::OlsLinear,
        Self::Ridge,
        Self::RidgeCv,
        Self::Lasso,
        Self::DecisionTree,
        Self::RandomForest,
        Self::ExtraTrees,
        Self::Bagging,
        Self::AdaboostR2,
        Self::GradientBoosting,
        Self::LeastSquaresBoosting,
        Self::VotingMean,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::OlsLinear => "ols_linear",
            Self::Ridge => "ridge",
            Self::RidgeCv => "ridge_cv",
            Self::Lasso => "lasso",
            Self::DecisionTree => "decision_tree",
            Self::RandomForest => "random_forest",
            Self::ExtraTrees => "extra_trees",
            Self::Bagging => "bagging",
            Self::AdaboostR2 => "adaboost_r2",
            Self::GradientBoosting => "gradient_boosting",
            Self::LeastSquaresBoosting => "least_squares_boosting",
            Self::VotingMean => "voting_mean",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown baseline kind \"{s}\"")))
    }
}

/// Per-kind hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineParams {
    pub ridge_lambda: f64,
    pub lasso_alpha: f64,
    pub decision_tree: TreeParams,
    pub random_forest: ForestParams,
    pub extra_trees: ForestParams,
    pub bagging: ForestParams,
    pub adaboost: AdaBoostParams,
    pub gradient_boosting: GbtConfig,
    pub voting_members: Vec<BaselineKind>,
}

impl Default for BaselineParams {
    fn default() -> Self {
        let boosting = GbtConfig {
            n_rounds: 100,
            max_depth: 3,
            ..GbtConfig::default()
        };
        Self {
            ridge_lambda: 1.0,
            lasso_alpha: 1.0,
            decision_tree: TreeParams::default(),
            random_forest: ForestParams {
                tree: TreeParams {
                    max_features: 1.0 / 3.0,
                    ..TreeParams::default()
                },
                ..ForestParams::default()
            },
            extra_trees: ForestParams {
                bootstrap: false,
                tree: TreeParams {
                    random_thresholds: true,
                    ..TreeParams::default()
                },
                ..ForestParams::default()
            },
            bagging: ForestParams {
                n_estimators: 10,
                ..ForestParams::default()
            },
            adaboost: AdaBoostParams::default(),
            gradient_boosting: boosting,
            voting_members: vec![
                BaselineKind::Ridge,
                BaselineKind::RandomForest,
                BaselineKind::GradientBoosting,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum Fitted {
    Linear(LinearModel),
    Tree(Tree),
    /// Mean of the member trees.
    Forest(Vec<Tree>),
    AdaBoost(AdaBoostModel),
    Boosted(Ensemble),
    /// Mean of the member models.
    Voting(Vec<BaselineModel>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub kind: BaselineKind,
    pub features: Vec<String>,
    pub fitted: Fitted,
}

impl BaselineModel {
    /// `x` is ordered as [`BaselineModel::features`].
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        match &self.fitted {
            Fitted::Linear(m) => m.predict_row(x),
            Fitted::Tree(t) => t.predict(x),
            Fitted::Forest(ts) => cart::forest_predict(ts, x),
            Fitted::AdaBoost(m) => m.predict_row(x),
            Fitted::Boosted(e) => e.predict_row(x),
            Fitted::Voting(ms) => {
                ms.iter().map(|m| m.predict_row(x)).sum::<f64>() / ms.len() as f64
            }
        }
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        let d = self.features.len();
        let x = data.matrix(&self.features)?;
        Ok(x.chunks_exact(d).map(|r| self.predict_row(r)).collect())
    }
}

pub fn fit_baseline(
    kind: BaselineKind,
    train: &Dataset,
    features: &[String],
    target: &str,
    params: &BaselineParams,
    seed: u64,
) -> Result<BaselineModel> {
    if features.is_empty() {
        return Err(Error::InvalidArgument("feature set is empty".into()));
    }
    let x = train.matrix(features)?;
    let y = train.column_by_name(target)?;
    fit_baseline_matrix(kind, &x, &y, features, params, seed)
}

/// As [`fit_baseline`] on a row-major matrix whose columns are `features`.
pub fn fit_baseline_matrix(
    kind: BaselineKind,
    x: &[f64],
    y: &[f64],
    features: &[String],
    params: &BaselineParams,
    seed: u64,
) -> Result<BaselineModel> {
    let d = features.len();
    if y.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: y.len(),
        });
    }
    let all_rows: Vec<usize> = (0..y.len()).collect();
    let fitted = match kind {
        BaselineKind::OlsLinear => Fitted::Linear(linear::fit_ols(x, y, d)?),
        BaselineKind::Ridge => Fitted::Linear(linear::fit_ridge(x, y, d, params.ridge_lambda)?),
        BaselineKind::RidgeCv => Fitted::Linear(linear::fit_ridge_cv(x, y, d, seed)?),
        BaselineKind::Lasso => Fitted::Linear(linear::fit_lasso(x, y, d, params.lasso_alpha)?),
        BaselineKind::DecisionTree => Fitted::Tree(cart::fit_tree(
            x,
            y,
            d,
            &all_rows,
            &params.decision_tree,
            seed,
        )?),
        BaselineKind::RandomForest => {
            Fitted::Forest(cart::fit_forest(x, y, d, &params.random_forest, seed)?)
        }
        BaselineKind::ExtraTrees => {
            Fitted::Forest(cart::fit_forest(x, y, d, &params.extra_trees, seed)?)
        }
        BaselineKind::Bagging => Fitted::Forest(cart::fit_forest(x, y, d, &params.bagging, seed)?),
        BaselineKind::AdaboostR2 => {
            Fitted::AdaBoost(cart::fit_adaboost_r2(x, y, d, &params.adaboost, seed)?)
        }
        BaselineKind::GradientBoosting => {
            let cfg = GbtConfig {
                seed,
                ..params.gradient_boosting.clone()
            };
            Fitted::Boosted(fit_matrix(x, features, y, &cfg)?.0)
        }
        BaselineKind::LeastSquaresBoosting => {
            let cfg = GbtConfig {
                lambda_l1: 0.0,
                lambda_l2: 0.0,
                gamma: 0.0,
                seed,
                ..params.gradient_boosting.clone()
            };
            Fitted::Boosted(fit_matrix(x, features, y, &cfg)?.0)
        }
        BaselineKind::VotingMean => {
            if params.voting_members.is_empty()
                || params.voting_members.contains(&BaselineKind::VotingMean)
            {
                return Err(Error::Config(
                    "voting members must be non-empty and not nested".into(),
                ));
            }
            let members = params
                .voting_members
                .iter()
                .map(|&k| {
                    fit_baseline_matrix(
                        k,
                        x,
                        y,
                        features,
                        params,
                        rng::derive_named(seed, k.name()),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            Fitted::Voting(members)
        }
    };
    Ok(BaselineModel {
        kind,
        features: features.to_vec(),
        fitted,
    })
}
