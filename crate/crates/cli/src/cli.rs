//! Argument parsing and subcommand dispatch.

use std::collections::HashMap;
use std::fs;
use std::io::BufWriter;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use mixforge_core::baselines::{preselect, read_report_csv, BaselineKind, BaselineParams};
use mixforge_core::pipeline::run::{write_audit_csv, write_trial_lines};
use mixforge_core::pipeline::{
    clean, load_bundle, prepare, run_pipeline, run_stage1, save_bundle, stage1_bundle, tune_target,
    validate_out_of_set, write_run, ModelBundle, PipelineConfig, PipelineReport,
};
use mixforge_core::tune::write_trial_log;
use mixforge_core::{evaluate, load_dataset, rng, Dataset, FeatureSchema, Gate};
use serde::Serialize;
use serde_json::{json, Value};

use crate::service;

pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;
const DEFAULT_OUT: &str = "mixforge-out";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] mixforge_core::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
    #[error("invalid JSON in {context}: {source}")]
    Json {
        context: String,
        source: serde_json::Error,
    },
}

impl CliError {
    /// 2 for usage errors, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

#[derive(Debug, Parser)]
#[command(
    name = "mixforge",
    version,
    about = "UHPC mixture-property modelling pipeline"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Pipeline configuration file (JSON); a run manifest is also accepted
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Configuration override as KEY=VALUE with a JSON value; dotted keys reach nested fields
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Master seed; every component seed derives from it
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for artifacts and the run manifest
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset CSV with a header row of schema column names
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Schema JSON; defaults to the shipped UHPC schema
    #[arg(long, value_name = "FILE")]
    pub schema: Option<PathBuf>,
    /// Reject values outside the schema's observed ranges instead of warning
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct RowArgs {
    /// Input value as "NAME=VALUE" (repeatable)
    #[arg(long = "set", value_name = "NAME=VALUE")]
    pub set: Vec<String>,
    /// Input row as a JSON object, inline or as a file path
    #[arg(long, value_name = "JSON|FILE")]
    pub row: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a dataset and report its shape and range violations
    Validate(DataArgs),
    /// Write the seeded train/test split as CSV files
    Split(DataArgs),
    /// Train and rank baseline models on one target
    Preselect {
        #[command(flatten)]
        data: DataArgs,
        /// Target column name or alias
        #[arg(long)]
        target: String,
        /// Baseline kinds, comma separated; all kinds when omitted
        #[arg(long, value_delimiter = ',', value_parser = parse_kind)]
        kinds: Vec<BaselineKind>,
        /// Extra metric rows (report CSV layout) for models trained elsewhere
        #[arg(long, value_name = "FILE")]
        external: Option<PathBuf>,
        /// Gate: test RMSE must be below this
        #[arg(long, default_value_t = 30.0)]
        rmse_max: f64,
        /// Gate: test R² must exceed this
        #[arg(long, default_value_t = 0.18)]
        r2_min: f64,
    },
    /// Random-search hyperparameters for one target
    Tune {
        #[command(flatten)]
        data: DataArgs,
        /// Target column name or alias
        #[arg(long)]
        target: String,
    },
    /// Stage 1: tune and train Model 1 for the configured targets
    Train(DataArgs),
    /// Prune correlated inputs and remove outlier rows
    Clean(DataArgs),
    /// Attribute predictions to inputs for one row
    Explain {
        /// Model bundle JSON
        #[arg(long, value_name = "FILE")]
        bundle: PathBuf,
        #[command(flatten)]
        input: RowArgs,
        /// Restrict to one target
        #[arg(long)]
        target: Option<String>,
    },
    /// Stage 1 and Stage 2 end to end
    Pipeline(DataArgs),
    /// Score a bundle on labelled rows
    Evaluate {
        /// Model bundle JSON
        #[arg(long, value_name = "FILE")]
        bundle: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Restrict to one target
        #[arg(long)]
        target: Option<String>,
    },
    /// Predict every target for one row
    Predict {
        /// Model bundle JSON
        #[arg(long, value_name = "FILE")]
        bundle: PathBuf,
        #[command(flatten)]
        input: RowArgs,
    },
    /// Serve a bundle over HTTP
    Serve {
        /// Model bundle JSON
        #[arg(long, value_name = "FILE")]
        bundle: PathBuf,
        /// Listen address
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Reject out-of-range inputs instead of warning
        #[arg(long)]
        strict: bool,
    },
}

fn parse_kind(s: &str) -> std::result::Result<BaselineKind, String> {
    s.parse().map_err(|e: mixforge_core::Error| e.to_string())
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate(_) => "validate",
            Command::Split(_) => "split",
            Command::Preselect { .. } => "preselect",
            Command::Tune { .. } => "tune",
            Command::Train(_) => "train",
            Command::Clean(_) => "clean",
            Command::Explain { .. } => "explain",
            Command::Pipeline(_) => "pipeline",
            Command::Evaluate { .. } => "evaluate",
            Command::Predict { .. } => "predict",
            Command::Serve { .. } => "serve",
        }
    }
}

/// Defaults, then the config file, then `--override`s, then `--seed`.
pub fn resolve_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        None => PipelineConfig::default(),
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_err(path.display().to_string()))?;
            let json_err = |source| CliError::Json {
                context: path.display().to_string(),
                source,
            };
            let mut doc: Value = serde_json::from_str(&text).map_err(json_err)?;
            if doc.get("manifest_version").is_some() {
                doc = doc["config"].take();
            }
            serde_json::from_value(doc).map_err(json_err)?
        }
    };
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    manifest_version: u32,
    tool_version: &'static str,
    command: &'a str,
    argv: Vec<String>,
    config: &'a PipelineConfig,
    seeds: Value,
    created_unix: u64,
    outputs: Vec<String>,
}

fn write_manifest(dir: &Path, command: &str, cfg: &PipelineConfig, outputs: &[&str]) -> Result<()> {
    let seeds = json!({
        "seed": cfg.seed,
        "split": rng::derive_named(cfg.seed, "split"),
        "isolation": rng::derive_named(cfg.seed, "isolation"),
    });
    let m = Manifest {
        manifest_version: MANIFEST_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        command,
        argv: std::env::args().collect(),
        config: cfg,
        seeds,
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    write_json(&dir.join(MANIFEST_FILE), &m)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        context: path.display().to_string(),
        source,
    })?;
    fs::write(path, text).map_err(io_err(path.display().to_string()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        context: "output".into(),
        source,
    })?;
    println!("{text}");
    Ok(())
}

fn out_dir(cli_out: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = cli_out
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    fs::create_dir_all(&dir).map_err(io_err(dir.display().to_string()))?;
    Ok(dir)
}

fn load_schema(path: &Option<PathBuf>) -> Result<Arc<FeatureSchema>> {
    Ok(Arc::new(match path {
        None => FeatureSchema::uhpc(),
        Some(p) => FeatureSchema::from_json(
            &fs::read_to_string(p).map_err(io_err(p.display().to_string()))?,
        )?,
    }))
}

fn load_data(args: &DataArgs) -> Result<Dataset> {
    Ok(load_dataset(
        &args.data,
        load_schema(&args.schema)?,
        args.strict,
    )?)
}

fn load(path: &Path) -> Result<ModelBundle> {
    Ok(load_bundle(path)?)
}

/// Reads the input row from `--row` (inline JSON or file) and `--set` pairs;
/// `--set` wins on conflicts.
pub fn read_row(input: &RowArgs) -> Result<HashMap<String, f64>> {
    let mut raw = HashMap::new();
    if let Some(r) = &input.row {
        let text = if r.trim_start().starts_with('{') {
            r.clone()
        } else {
            fs::read_to_string(r).map_err(io_err(r.clone()))?
        };
        raw = serde_json::from_str(&text).map_err(|source| CliError::Json {
            context: "--row".into(),
            source,
        })?;
    }
    for s in &input.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set \"{s}\" is not NAME=VALUE")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("--set \"{s}\": \"{v}\" is not a number")))?;
        raw.insert(k.trim().to_string(), v);
    }
    if raw.is_empty() {
        return Err(CliError::Usage(
            "give input values with --set or --row".into(),
        ));
    }
    Ok(raw)
}

fn warn_out_of_range(bundle: &ModelBundle, raw: &HashMap<String, f64>) {
    for c in bundle.schema.inputs() {
        if let Some(&v) = raw.get(&c.name) {
            if !c.in_range(v) {
                log::warn!(
                    "{} = {v} is outside the observed range [{}, {}]",
                    c.name,
                    c.observed_min,
                    c.observed_max
                );
            }
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let command = cli.command.name();
    match &cli.command {
        Command::Validate(args) => {
            let data = load_data(args)?;
            let violations = data.range_violations();
            let cfg = resolve_config(&cli)?;
            print_json(&json!({
                "rows": data.n_rows(),
                "columns": data.n_cols(),
                "schema": data.schema().name,
                "range_violations": violations.len(),
                "first_violations": violations.iter().take(20).collect::<Vec<_>>(),
            }))?;
            if let Some(dir) = &cli.out {
                fs::create_dir_all(dir).map_err(io_err(dir.display().to_string()))?;
                write_manifest(dir, command, &cfg, &[])?;
            }
        }
        Command::Split(args) => {
            let cfg = resolve_config(&cli)?;
            let data = load_data(args)?;
            let (train, test) = mixforge_core::split(
                &data,
                cfg.train_fraction,
                rng::derive_named(cfg.seed, "split"),
            )?;
            let dir = out_dir(&cli.out)?;
            train.save_csv(&dir.join("train.csv"))?;
            test.save_csv(&dir.join("test.csv"))?;
            write_manifest(&dir, command, &cfg, &["train.csv", "test.csv"])?;
            print_json(&json!({ "train": train.n_rows(), "test": test.n_rows() }))?;
        }
        Command::Preselect {
            data,
            target,
            kinds,
            external,
            rmse_max,
            r2_min,
        } => {
            let cfg = resolve_config(&cli)?;
            let d = load_data(data)?;
            let target = d.schema().resolve_target(target)?;
            let p = prepare(&d, &d.schema().input_names(), &cfg, None)?;
            let kinds = if kinds.is_empty() {
                BaselineKind::ALL.to_vec()
            } else {
                kinds.clone()
            };
            let external = match external {
                Some(path) => read_report_csv(
                    fs::File::open(path).map_err(io_err(path.display().to_string()))?,
                )?,
                None => Vec::new(),
            };
            let gate = Gate {
                rmse_max: *rmse_max,
                r2_min: *r2_min,
            };
            let report = preselect(
                &p.train,
                &p.test,
                &p.features,
                &target,
                &kinds,
                &BaselineParams::default(),
                gate,
                rng::derive_named(cfg.seed, "preselect"),
                external,
            )?;
            let dir = out_dir(&cli.out)?;
            let csv_path = dir.join("preselect.csv");
            report.write_csv(
                fs::File::create(&csv_path).map_err(io_err(csv_path.display().to_string()))?,
            )?;
            fs::write(dir.join("preselect.json"), report.to_json()?)
                .map_err(io_err("preselect.json"))?;
            write_manifest(&dir, command, &cfg, &["preselect.csv", "preselect.json"])?;
            print!("{}", report.to_text());
        }
        Command::Tune { data, target } => {
            let cfg = resolve_config(&cli)?;
            let d = load_data(data)?;
            let (_, outcome) = tune_target(&d, &cfg, target)?;
            let dir = out_dir(&cli.out)?;
            let path = dir.join("trials.jsonl");
            write_trial_log(
                &outcome.trials,
                BufWriter::new(fs::File::create(&path).map_err(io_err("trials.jsonl"))?),
            )?;
            write_json(&dir.join("best.json"), &outcome.best)?;
            write_manifest(&dir, command, &cfg, &["trials.jsonl", "best.json"])?;
            print_json(&outcome.best)?;
        }
        Command::Train(args) => {
            let cfg = resolve_config(&cli)?;
            let d = load_data(args)?;
            let stage1 = run_stage1(&d, &cfg)?;
            let bundle = stage1_bundle(&d, &stage1, &cfg);
            let dir = out_dir(&cli.out)?;
            save_bundle(&bundle, &dir.join("bundle.json"))?;
            write_trial_lines(
                &stage1.trials,
                BufWriter::new(
                    fs::File::create(dir.join("trials.jsonl")).map_err(io_err("trials.jsonl"))?,
                ),
            )?;
            write_manifest(&dir, command, &cfg, &["bundle.json", "trials.jsonl"])?;
            print!("{}", PipelineReport::from_bundle(&bundle).to_text());
        }
        Command::Clean(args) => {
            let cfg = resolve_config(&cli)?;
            let d = load_data(args)?;
            let cleaned = clean(&d, &cfg)?;
            let dir = out_dir(&cli.out)?;
            cleaned.universe.save_csv(&dir.join("cleaned.csv"))?;
            write_audit_csv(
                &cleaned.cleaning.outliers.removed,
                fs::File::create(dir.join("audit.csv")).map_err(io_err("audit.csv"))?,
            )?;
            write_json(&dir.join("cleaning.json"), &cleaned.cleaning)?;
            write_manifest(
                &dir,
                command,
                &cfg,
                &["cleaned.csv", "audit.csv", "cleaning.json"],
            )?;
            print_json(&json!({
                "rows_in": d.n_rows(),
                "rows_kept": cleaned.universe.n_rows(),
                "removed": cleaned.cleaning.outliers.removed.len(),
                "pruned": cleaned.cleaning.prune.dropped.iter().map(|x| &x.column).collect::<Vec<_>>(),
                "filter_scope": cfg.filter_scope,
            }))?;
        }
        Command::Explain {
            bundle,
            input,
            target,
        } => {
            let b = load(bundle)?;
            let raw = read_row(input)?;
            warn_out_of_range(&b, &raw);
            let targets: Vec<String> = match target {
                Some(t) => vec![b.entry(t)?.target.clone()],
                None => b.targets.iter().map(|t| t.target.clone()).collect(),
            };
            let mut out = Vec::new();
            for t in &targets {
                let a = b.explain(t, &raw)?;
                out.push(json!({
                    "target": t, "base_value": a.base_value, "prediction": a.prediction,
                    "contributions": a.contributions,
                }));
            }
            if let Some(dir) = &cli.out {
                fs::create_dir_all(dir).map_err(io_err(dir.display().to_string()))?;
                write_json(&dir.join("explain.json"), &out)?;
                write_manifest(dir, command, &b.config, &["explain.json"])?;
            }
            print_json(&json!({ "attributions": out }))?;
        }
        Command::Pipeline(args) => {
            let cfg = resolve_config(&cli)?;
            let d = load_data(args)?;
            let run = run_pipeline(&d, &cfg)?;
            let dir = out_dir(&cli.out)?;
            write_run(&run, &dir)?;
            write_manifest(
                &dir,
                command,
                &cfg,
                &["bundle.json", "trials.jsonl", "audit.csv", "report.json"],
            )?;
            print!("{}", PipelineReport::from_bundle(&run.bundle).to_text());
        }
        Command::Evaluate {
            bundle,
            data,
            target,
        } => {
            let b = load(bundle)?;
            let d = load_dataset(&data.data, Arc::new(b.schema.clone()), data.strict)?;
            let targets: Vec<String> = match target {
                Some(t) => vec![b.entry(t)?.target.clone()],
                None => b.targets.iter().map(|t| t.target.clone()).collect(),
            };
            let mut out = Vec::new();
            for t in &targets {
                let rep = validate_out_of_set(&b, &d, t)?;
                let y: Vec<f64> = rep.rows.iter().map(|r| r.actual).collect();
                let y_hat: Vec<f64> = rep.rows.iter().map(|r| r.predicted).collect();
                out.push(json!({
                    "target": t,
                    "metrics": evaluate(&y, &y_hat)?,
                    "max_abs_percent": rep.max_abs_percent,
                    "flagged_zero_targets": rep.flagged_zero_targets,
                    "rows": rep.rows,
                }));
            }
            let dir = out_dir(&cli.out)?;
            write_json(&dir.join("evaluation.json"), &out)?;
            write_manifest(&dir, command, &b.config, &["evaluation.json"])?;
            let summary: Vec<Value> = out
                .iter()
                .map(|o| json!({ "target": o["target"], "metrics": o["metrics"], "max_abs_percent": o["max_abs_percent"] }))
                .collect();
            print_json(&summary)?;
        }
        Command::Predict { bundle, input } => {
            let b = load(bundle)?;
            let raw = read_row(input)?;
            warn_out_of_range(&b, &raw);
            let predictions = b.predict_all(&raw)?;
            if let Some(dir) = &cli.out {
                fs::create_dir_all(dir).map_err(io_err(dir.display().to_string()))?;
                write_json(&dir.join("predictions.json"), &predictions)?;
                write_manifest(dir, command, &b.config, &["predictions.json"])?;
            }
            print_json(&json!({ "predictions": predictions }))?;
        }
        Command::Serve {
            bundle,
            bind,
            strict,
        } => {
            let b = load(bundle)?;
            let rt = tokio::runtime::Runtime::new().map_err(io_err("tokio runtime"))?;
            rt.block_on(service::serve(b, *bind, *strict))
                .map_err(io_err(format!("serving on {bind}")))?;
        }
    }
    Ok(())
}
