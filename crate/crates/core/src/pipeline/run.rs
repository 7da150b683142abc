//! Stage 1 (tune and train on raw data) and Stage 2 (prune, filter
//! outliers, select features, re-tune and retrain).

use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bundle::{
    Cleaning, CreationInfo, ModelBundle, ModelEntry, OutlierAudit, RemovedRow, SearchSummary,
    TargetEntry, BUNDLE_FORMAT_VERSION,
};
use super::config::{FilterScope, PipelineConfig};
use crate::dataset::{split, Dataset};
use crate::error::{Error, Result};
use crate::explain::{rank_features, select_features, FeatureSelection, SelectionPolicy};
use crate::gbtree::{self, GbtConfig};
use crate::metrics::{evaluate, MetricsReport};
use crate::preprocess::{
    correlation_matrix, filter_outliers, fit_isolation_forest, prune_multicollinear,
    score_anomalies, PruneOutcome,
};
use crate::rng;
use crate::standardize::{fit_standardizer, mean_sd, StandardizationParams};
use crate::tune::{random_search, SearchOutcome, TrialResult};

pub const TRIAL_LOG_FILE: &str = "trials.jsonl";

/// One trial-log line: the trial plus the model it tuned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLine {
    pub target: String,
    pub stage: u8,
    #[serde(flatten)]
    pub trial: TrialResult,
}

#[derive(Debug, Clone)]
pub struct Stage1 {
    pub entries: Vec<(String, ModelEntry)>,
    pub trials: Vec<TrialLine>,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub bundle: ModelBundle,
    pub trials: Vec<TrialLine>,
}

fn split_seed(cfg: &PipelineConfig) -> u64 {
    rng::derive_named(cfg.seed, "split")
}

fn tune_seed(cfg: &PipelineConfig, target: &str) -> u64 {
    rng::derive_named(cfg.seed, &format!("tune/{target}"))
}

/// Candidate columns with non-zero spread in `data`.
fn usable(data: &Dataset, columns: &[String]) -> Result<Vec<String>> {
    let mut out = Vec::with_capacity(columns.len());
    for c in columns {
        let (_, sd) = mean_sd(&data.column_by_name(c)?);
        if sd > 0.0 && sd.is_finite() {
            out.push(c.clone());
        } else {
            log::warn!("column \"{c}\" is constant and is not used as a feature");
        }
    }
    Ok(out)
}

struct ModelJob<'a> {
    cfg: &'a PipelineConfig,
    target: &'a str,
    stage: u8,
    selection: FeatureSelection,
    /// Rows available to the model, raw values.
    universe: &'a Dataset,
    /// Fixed (train, test) ids; otherwise split the universe.
    fixed_split: Option<(&'a [u64], &'a [u64])>,
    reuse: Option<GbtConfig>,
}

/// Usable features, their standardizer fitted on the universe, and the
/// standardized train/test split.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub features: Vec<String>,
    pub standardization: StandardizationParams,
    pub train: Dataset,
    pub test: Dataset,
}

/// Standardizes `candidates` over `universe` and splits it with the
/// pipeline's split seed, or by the given `(train, test)` ids.
pub fn prepare(
    universe: &Dataset,
    candidates: &[String],
    cfg: &PipelineConfig,
    fixed_split: Option<(&[u64], &[u64])>,
) -> Result<Prepared> {
    let features = usable(universe, candidates)?;
    if features.is_empty() {
        return Err(Error::InvalidArgument(
            "feature selection leaves no usable inputs".into(),
        ));
    }
    let standardization = fit_standardizer(universe, &features)?;
    let z = standardization.apply_columns(universe, &features)?;
    let (train, test) = match fixed_split {
        Some((tr, te)) => (z.select_ids(tr)?, z.select_ids(te)?),
        None => split(&z, cfg.train_fraction, split_seed(cfg))?,
    };
    Ok(Prepared {
        features,
        standardization,
        train,
        test,
    })
}

/// The Stage 1 search for one target, without the final fit.
pub fn tune_target(
    data: &Dataset,
    cfg: &PipelineConfig,
    target: &str,
) -> Result<(Prepared, SearchOutcome)> {
    cfg.validate()?;
    let target = data.schema().resolve_target(target)?;
    let p = prepare(data, &data.schema().input_names(), cfg, None)?;
    let outcome = random_search(
        &cfg.search,
        cfg.n_trials,
        &p.train,
        &p.features,
        &target,
        cfg.k,
        tune_seed(cfg, &target),
    )?;
    Ok((p, outcome))
}

fn build_model(job: ModelJob<'_>) -> Result<(ModelEntry, Vec<TrialLine>)> {
    let cfg = job.cfg;
    let Prepared {
        features,
        standardization,
        train,
        test,
    } = prepare(job.universe, &job.selection.included, cfg, job.fixed_split)?;

    let (config, search, trials) = match job.reuse {
        Some(c) => (
            c,
            SearchSummary {
                n_trials: None,
                k: cfg.k,
                best_index: None,
                best_mean_rmse: None,
                log: TRIAL_LOG_FILE.into(),
                stage: 1,
            },
            Vec::new(),
        ),
        None => {
            let outcome = random_search(
                &cfg.search,
                cfg.n_trials,
                &train,
                &features,
                job.target,
                cfg.k,
                tune_seed(cfg, job.target),
            )?;
            let summary = SearchSummary {
                n_trials: Some(cfg.n_trials),
                k: cfg.k,
                best_index: Some(outcome.best.index),
                best_mean_rmse: outcome.best.mean_rmse,
                log: TRIAL_LOG_FILE.into(),
                stage: job.stage,
            };
            let lines = outcome
                .trials
                .into_iter()
                .map(|trial| TrialLine {
                    target: job.target.to_string(),
                    stage: job.stage,
                    trial,
                })
                .collect();
            (outcome.best.config, summary, lines)
        }
    };

    let ensemble = gbtree::fit(&train, &features, job.target, &config)?;
    let eval = |d: &Dataset| -> Result<MetricsReport> {
        evaluate(
            &d.column_by_name(job.target)?,
            &ensemble.predict_dataset(d)?,
        )
    };
    let (train_metrics, test_metrics) = (eval(&train)?, eval(&test)?);

    let bg_seed = rng::derive_named(
        cfg.seed,
        &format!("background/{}/{}", job.stage, job.target),
    );
    let m = cfg.background_size.min(train.n_rows());
    let mut picks = sample(&mut rng::seeded(bg_seed), train.n_rows(), m).into_vec();
    picks.sort_unstable();
    let x = train.matrix(&features)?;
    let d = features.len();
    let background = picks
        .iter()
        .map(|&i| x[i * d..(i + 1) * d].to_vec())
        .collect();

    let mut selection = job.selection;
    for f in selection.included.clone() {
        if !features.contains(&f) {
            selection.included.retain(|g| g != &f);
            selection.excluded.push(f);
        }
    }
    Ok((
        ModelEntry {
            selection,
            standardization,
            config,
            ensemble,
            train_ids: train.row_ids().to_vec(),
            test_ids: test.row_ids().to_vec(),
            train_metrics,
            test_metrics,
            search,
            background,
        },
        trials,
    ))
}

/// Model 1 per target: every input, raw rows, tuned by random search.
pub fn run_stage1(data: &Dataset, cfg: &PipelineConfig) -> Result<Stage1> {
    cfg.validate()?;
    let schema = data.schema();
    let targets = cfg.resolve_targets(schema)?;
    let inputs = schema.input_names();
    let results: Vec<(String, ModelEntry, Vec<TrialLine>)> = targets
        .par_iter()
        .map(|t| {
            let selection = FeatureSelection {
                target: t.clone(),
                included: inputs.clone(),
                excluded: Vec::new(),
                policy: SelectionPolicy::BottomK { k: 0 },
            };
            let (entry, trials) = build_model(ModelJob {
                cfg,
                target: t,
                stage: 1,
                selection,
                universe: data,
                fixed_split: None,
                reuse: None,
            })?;
            log::info!("stage 1 {t}: test RMSE {:.4}", entry.test_metrics.rmse);
            Ok((t.clone(), entry, trials))
        })
        .collect::<Result<_>>()?;
    let mut stage = Stage1 {
        entries: Vec::new(),
        trials: Vec::new(),
    };
    for (t, e, tr) in results {
        stage.entries.push((t, e));
        stage.trials.extend(tr);
    }
    Ok(stage)
}

/// Cleaned rows for Stage 2.
#[derive(Debug, Clone)]
pub struct Cleaned {
    pub cleaning: Cleaning,
    /// Rows available to Model 2, raw values.
    pub universe: Dataset,
    /// `(train, test)` ids when the Stage 1 split is kept.
    pub fixed_split: Option<(Vec<u64>, Vec<u64>)>,
}

/// Correlation pruning over the inputs, then Isolation Forest filtering on
/// the kept inputs, over the whole dataset or the Stage 1 training rows.
pub fn clean(data: &Dataset, cfg: &PipelineConfig) -> Result<Cleaned> {
    cfg.validate()?;
    let inputs = usable(data, &data.schema().input_names())?;
    let prune = if inputs.len() >= 2 {
        prune_multicollinear(
            &correlation_matrix(data, &inputs)?,
            cfg.prune_threshold,
            &[],
        )?
    } else {
        PruneOutcome {
            kept: inputs.clone(),
            dropped: Vec::new(),
            exempt_pairs: Vec::new(),
        }
    };
    let if_seed = rng::derive_named(cfg.seed, "isolation");
    let filter = |rows: &Dataset| -> Result<(Dataset, Vec<RemovedRow>)> {
        if cfg.contamination == 0.0 {
            return Ok((rows.clone(), Vec::new()));
        }
        let psi = cfg.isolation_psi.min(rows.n_rows());
        let model = fit_isolation_forest(rows, &prune.kept, cfg.isolation_trees, psi, if_seed)?;
        let scores = score_anomalies(&model, rows)?;
        let (kept, removed) = filter_outliers(rows, &scores, cfg.contamination)?;
        let by_id: std::collections::HashMap<u64, f64> = rows
            .row_ids()
            .iter()
            .copied()
            .zip(scores.iter().copied())
            .collect();
        let removed = removed
            .into_iter()
            .map(|row_id| RemovedRow {
                row_id,
                score: by_id[&row_id],
            })
            .collect();
        Ok((kept, removed))
    };
    let (universe, fixed, removed, n_scored) = match cfg.filter_scope {
        FilterScope::FullDataset => {
            let (kept, removed) = filter(data)?;
            (kept, None, removed, data.n_rows())
        }
        FilterScope::TrainOnly => {
            let (train, test) = split(data, cfg.train_fraction, split_seed(cfg))?;
            let (kept, removed) = filter(&train)?;
            let gone: Vec<u64> = removed.iter().map(|r| r.row_id).collect();
            let universe = data.without_ids(&gone)?;
            let split = (kept.row_ids().to_vec(), test.row_ids().to_vec());
            (universe, Some(split), removed, train.n_rows())
        }
    };
    Ok(Cleaned {
        cleaning: Cleaning {
            prune,
            outliers: OutlierAudit {
                scope: cfg.filter_scope,
                contamination: cfg.contamination,
                n_scored,
                removed,
            },
        },
        universe,
        fixed_split: fixed,
    })
}

/// Model 2 per target and the assembled bundle.
pub fn run_stage2(data: &Dataset, stage1: Stage1, cfg: &PipelineConfig) -> Result<PipelineRun> {
    cfg.validate()?;
    let schema = data.schema();
    let Cleaned {
        cleaning,
        universe,
        fixed_split: fixed,
    } = clean(data, cfg)?;
    let pruned: Vec<String> = cleaning
        .prune
        .dropped
        .iter()
        .map(|d| d.column.clone())
        .collect();

    let results: Vec<(TargetEntry, Vec<TrialLine>)> = stage1
        .entries
        .par_iter()
        .map(|(t, m1)| {
            let policy = cfg.policy_for(t)?;
            let ranking = match policy {
                SelectionPolicy::FixedList { .. } => Vec::new(),
                _ => {
                    let rows = data.select_ids(&m1.train_ids)?;
                    let z = m1
                        .standardization
                        .apply_columns(&rows, &m1.ensemble.features)?;
                    let take: Vec<usize> = (0..z.n_rows().min(cfg.ranking_rows)).collect();
                    let bg_ids: Vec<usize> = (0..z.n_rows().min(cfg.background_size)).collect();
                    rank_features(
                        &m1.ensemble,
                        &z.select_rows(&take)?,
                        &z.select_rows(&bg_ids)?,
                    )?
                }
            };
            let mut selection = select_features(schema, t, &ranking, &policy)?;
            for p in &pruned {
                if selection.included.contains(p) {
                    selection.included.retain(|f| f != p);
                    selection.excluded.push(p.clone());
                }
            }
            if selection.included.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "{t}: feature selection removed every input"
                )));
            }
            let (entry, trials) = build_model(ModelJob {
                cfg,
                target: t,
                stage: 2,
                selection,
                universe: &universe,
                fixed_split: fixed.as_ref().map(|(a, b)| (a.as_slice(), b.as_slice())),
                reuse: (!cfg.retune_stage2).then(|| m1.config.clone()),
            })?;
            log::info!(
                "stage 2 {t}: test RMSE {:.4} (stage 1 {:.4})",
                entry.test_metrics.rmse,
                m1.test_metrics.rmse
            );
            let unit = schema.column(t).map(|c| c.unit.clone()).unwrap_or_default();
            Ok((
                TargetEntry {
                    target: t.clone(),
                    unit,
                    model1: m1.clone(),
                    model2: Some(entry),
                },
                trials,
            ))
        })
        .collect::<Result<_>>()?;

    let mut trials = stage1.trials;
    let mut targets = Vec::new();
    for (e, tr) in results {
        targets.push(e);
        trials.extend(tr);
    }
    let bundle = ModelBundle {
        format_version: BUNDLE_FORMAT_VERSION,
        schema: schema.clone(),
        config: cfg.clone(),
        created: CreationInfo {
            seed: cfg.seed,
            split_seed: split_seed(cfg),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        },
        cleaning: Some(cleaning),
        targets,
    };
    bundle.check_consistency()?;
    Ok(PipelineRun { bundle, trials })
}

/// Stage 1 followed by Stage 2.
pub fn run_pipeline(data: &Dataset, cfg: &PipelineConfig) -> Result<PipelineRun> {
    let stage1 = run_stage1(data, cfg)?;
    run_stage2(data, stage1, cfg)
}

/// Bundle of Model 1 entries only.
pub fn stage1_bundle(data: &Dataset, stage1: &Stage1, cfg: &PipelineConfig) -> ModelBundle {
    let schema = data.schema();
    ModelBundle {
        format_version: BUNDLE_FORMAT_VERSION,
        schema: schema.clone(),
        config: cfg.clone(),
        created: CreationInfo {
            seed: cfg.seed,
            split_seed: split_seed(cfg),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        },
        cleaning: None,
        targets: stage1
            .entries
            .iter()
            .map(|(t, m)| TargetEntry {
                target: t.clone(),
                unit: schema.column(t).map(|c| c.unit.clone()).unwrap_or_default(),
                model1: m.clone(),
                model2: None,
            })
            .collect(),
    }
}

/// Both models' metrics side by side per target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub target: String,
    pub unit: String,
    pub model1_train: MetricsReport,
    pub model1_test: MetricsReport,
    pub model2_train: Option<MetricsReport>,
    pub model2_test: Option<MetricsReport>,
    pub model1_features: usize,
    pub model2_features: Option<usize>,
    pub model1_rows: usize,
    pub model2_rows: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub filter_scope: Option<FilterScope>,
    pub removed_outliers: usize,
    pub pruned_columns: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

impl PipelineReport {
    pub fn from_bundle(b: &ModelBundle) -> Self {
        let rows = b
            .targets
            .iter()
            .map(|t| ComparisonRow {
                target: t.target.clone(),
                unit: t.unit.clone(),
                model1_train: t.model1.train_metrics.clone(),
                model1_test: t.model1.test_metrics.clone(),
                model2_train: t.model2.as_ref().map(|m| m.train_metrics.clone()),
                model2_test: t.model2.as_ref().map(|m| m.test_metrics.clone()),
                model1_features: t.model1.ensemble.features.len(),
                model2_features: t.model2.as_ref().map(|m| m.ensemble.features.len()),
                model1_rows: t.model1.train_ids.len() + t.model1.test_ids.len(),
                model2_rows: t
                    .model2
                    .as_ref()
                    .map(|m| m.train_ids.len() + m.test_ids.len()),
            })
            .collect();
        Self {
            filter_scope: b.cleaning.as_ref().map(|c| c.outliers.scope),
            removed_outliers: b.cleaning.as_ref().map_or(0, |c| c.outliers.removed.len()),
            pruned_columns: b
                .cleaning
                .as_ref()
                .map(|c| c.prune.dropped.iter().map(|d| d.column.clone()).collect())
                .unwrap_or_default(),
            rows,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let r2 = |m: &MetricsReport| m.r2.map_or("-".to_string(), |v| format!("{v:.3}"));
        out.push_str(&format!(
            "{:<22} {:>10} {:>8} {:>10} {:>8}\n",
            "target", "M1 RMSE", "M1 R2", "M2 RMSE", "M2 R2"
        ));
        for r in &self.rows {
            let (m2_rmse, m2_r2) = match &r.model2_test {
                Some(m) => (format!("{:.4}", m.rmse), r2(m)),
                None => ("-".into(), "-".into()),
            };
            out.push_str(&format!(
                "{:<22} {:>10.4} {:>8} {:>10} {:>8}\n",
                r.target,
                r.model1_test.rmse,
                r2(&r.model1_test),
                m2_rmse,
                m2_r2
            ));
        }
        out
    }
}

pub fn write_trial_lines<W: Write>(lines: &[TrialLine], mut w: W) -> Result<()> {
    for l in lines {
        serde_json::to_writer(&mut w, l)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_audit_csv<W: Write>(removed: &[RemovedRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["row_id", "score"])?;
    for r in removed {
        out.write_record([r.row_id.to_string(), r.score.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `bundle.json`, `trials.jsonl`, `audit.csv` and `report.json` into `dir`.
pub fn write_run(run: &PipelineRun, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    super::bundle::save_bundle(&run.bundle, &dir.join("bundle.json"))?;
    write_trial_lines(
        &run.trials,
        std::io::BufWriter::new(std::fs::File::create(dir.join(TRIAL_LOG_FILE))?),
    )?;
    write_audit_csv(
        run.bundle
            .cleaning
            .as_ref()
            .map_or(&[][..], |c| &c.outliers.removed),
        std::fs::File::create(dir.join("audit.csv"))?,
    )?;
    let report = PipelineReport::from_bundle(&run.bundle);
    std::fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    Ok(())
}
