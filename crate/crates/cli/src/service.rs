//! JSON API over an immutable model bundle.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mixforge_core::explain::Contribution;
use mixforge_core::pipeline::{ModelBundle, Prediction};
use mixforge_core::{ColumnKind, Error as CoreError, MetricsReport};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub struct AppState {
    bundle: ModelBundle,
    strict: bool,
    /// Inputs consumed by at least one serving model, in schema order.
    required: Vec<String>,
}

impl AppState {
    pub fn new(bundle: ModelBundle, strict: bool) -> Self {
        let used: Vec<&String> = bundle
            .targets
            .iter()
            .flat_map(|t| t.serving().ensemble.features.iter())
            .collect();
        let required = bundle
            .schema
            .input_names()
            .into_iter()
            .filter(|f| used.contains(&f))
            .collect();
        Self {
            bundle,
            strict,
            required,
        }
    }
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    Unprocessable {
        message: String,
        feature: Option<String>,
    },
    Internal(String),
}

static ERROR_SEQ: AtomicU64 = AtomicU64::new(0);

fn incident_id() -> String {
    let nanos = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_nanos() as u64);
    format!(
        "{:016x}",
        nanos ^ ERROR_SEQ.fetch_add(1, Ordering::Relaxed).rotate_left(48)
    )
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        match self {
            ApiError::BadRequest(detail) => (
                StatusCode::BAD_REQUEST,
                Json(json!({ "error": "bad request", "detail": detail })),
            )
                .into_response(),
            ApiError::Unprocessable { message, feature } => (
                StatusCode::UNPROCESSABLE_ENTITY,
                Json(json!({ "error": message, "feature": feature })),
            )
                .into_response(),
            ApiError::Internal(detail) => {
                let id = incident_id();
                log::error!("internal error {id}: {detail}");
                (
                    StatusCode::INTERNAL_SERVER_ERROR,
                    Json(json!({ "error": "internal error", "id": id })),
                )
                    .into_response()
            }
        }
    }
}

fn unprocessable(message: String, feature: Option<&str>) -> ApiError {
    ApiError::Unprocessable {
        message,
        feature: feature.map(str::to_string),
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::MissingFeature(f) => {
                unprocessable(format!("missing required feature \"{f}\""), Some(&f))
            }
            CoreError::UnknownColumn(f) => {
                unprocessable(format!("unknown feature \"{f}\""), Some(&f))
            }
            CoreError::UnknownTarget(t) => unprocessable(format!("unknown target \"{t}\""), None),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeWarning {
    pub column: String,
    pub value: f64,
    pub min: f64,
    pub max: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub predictions: Vec<Prediction>,
    pub warnings: Vec<RangeWarning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetAttribution {
    pub target: String,
    pub unit: String,
    pub base_value: f64,
    pub prediction: f64,
    pub contributions: Vec<Contribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainResponse {
    pub attributions: Vec<TargetAttribution>,
    pub warnings: Vec<RangeWarning>,
}

/// Validates a request body: a JSON object mapping input names to finite numbers.
pub fn parse_features(
    state: &AppState,
    body: &[u8],
) -> Result<(HashMap<String, f64>, Vec<RangeWarning>), ApiError> {
    let value: Value = serde_json::from_slice(body)
        .map_err(|e| ApiError::BadRequest(format!("malformed JSON: {e}")))?;
    let Value::Object(map) = value else {
        return Err(ApiError::BadRequest(
            "request body must be a JSON object mapping feature names to numbers".into(),
        ));
    };
    let schema = &state.bundle.schema;
    let mut raw = HashMap::with_capacity(map.len());
    let mut warnings = Vec::new();
    for (name, v) in map {
        let spec = schema
            .column(&name)
            .filter(|c| c.kind == ColumnKind::Input)
            .ok_or_else(|| unprocessable(format!("unknown feature \"{name}\""), Some(&name)))?;
        let x = v.as_f64().filter(|x| x.is_finite()).ok_or_else(|| {
            unprocessable(
                format!("feature \"{name}\" must be a finite number"),
                Some(&name),
            )
        })?;
        if !spec.in_range(x) {
            let w = RangeWarning {
                message: format!(
                    "{name} = {x} is outside the observed range [{}, {}]",
                    spec.observed_min, spec.observed_max
                ),
                column: name.clone(),
                value: x,
                min: spec.observed_min,
                max: spec.observed_max,
            };
            if state.strict {
                return Err(unprocessable(w.message, Some(&name)));
            }
            warnings.push(w);
        }
        raw.insert(name, x);
    }
    if let Some(missing) = state.required.iter().find(|f| !raw.contains_key(*f)) {
        return Err(unprocessable(
            format!("missing required feature \"{missing}\""),
            Some(missing),
        ));
    }
    warnings.sort_by_key(|w| schema.index_of(&w.column));
    Ok((raw, warnings))
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn schema(State(state): State<Arc<AppState>>) -> Json<Value> {
    let s = &state.bundle.schema;
    let features: Vec<Value> = s
        .inputs()
        .map(|c| {
            json!({
                "name": c.name, "unit": c.unit, "min": c.observed_min, "max": c.observed_max,
                "mean": c.mean, "sd": c.sd,
            })
        })
        .collect();
    let targets: Vec<Value> = state
        .bundle
        .targets
        .iter()
        .map(|t| {
            let m = t.serving();
            json!({
                "name": t.target, "unit": t.unit,
                "included": m.ensemble.features, "excluded": m.selection.excluded,
            })
        })
        .collect();
    Json(json!({
        "name": s.name, "version": s.version, "strict": state.strict,
        "features": features, "required": state.required, "targets": targets,
    }))
}

fn model_summary(m: &mixforge_core::pipeline::ModelEntry) -> Value {
    let metrics = |r: &MetricsReport| serde_json::to_value(r).unwrap_or(Value::Null);
    json!({
        "features": m.ensemble.features,
        "selection_policy": m.selection.policy,
        "hyperparameters": m.config,
        "n_trees": m.ensemble.trees.len(),
        "n_train": m.train_ids.len(),
        "n_test": m.test_ids.len(),
        "train_metrics": metrics(&m.train_metrics),
        "test_metrics": metrics(&m.test_metrics),
        "search": m.search,
    })
}

async fn model_info(State(state): State<Arc<AppState>>) -> Json<Value> {
    let b = &state.bundle;
    let targets: Vec<Value> = b
        .targets
        .iter()
        .map(|t| {
            json!({
                "target": t.target, "unit": t.unit,
                "serving": if t.model2.is_some() { "model2" } else { "model1" },
                "model1": model_summary(&t.model1),
                "model2": t.model2.as_ref().map(model_summary),
            })
        })
        .collect();
    let cleaning = b.cleaning.as_ref().map(|c| {
        json!({
            "pruned": c.prune.dropped.iter().map(|d| &d.column).collect::<Vec<_>>(),
            "filter_scope": c.outliers.scope,
            "contamination": c.outliers.contamination,
            "removed_rows": c.outliers.removed.len(),
        })
    });
    Json(json!({
        "format_version": b.format_version,
        "created": b.created,
        "config": b.config,
        "cleaning": cleaning,
        "targets": targets,
    }))
}

fn ensure_finite(values: impl IntoIterator<Item = f64>) -> Result<(), ApiError> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(ApiError::Internal("non-finite model output".into()))
    }
}

async fn predict(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> Result<Json<PredictResponse>, ApiError> {
    let (raw, warnings) = parse_features(&state, &body)?;
    let predictions = state.bundle.predict_all(&raw)?;
    ensure_finite(predictions.iter().map(|p| p.value))?;
    Ok(Json(PredictResponse {
        predictions,
        warnings,
    }))
}

async fn explain(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> Result<Json<ExplainResponse>, ApiError> {
    let (raw, warnings) = parse_features(&state, &body)?;
    let mut attributions = Vec::with_capacity(state.bundle.targets.len());
    for t in &state.bundle.targets {
        let a = t.serving().explain(&raw)?;
        ensure_finite(
            std::iter::once(a.prediction)
                .chain(std::iter::once(a.base_value))
                .chain(a.contributions.iter().map(|c| c.value)),
        )?;
        attributions.push(TargetAttribution {
            target: t.target.clone(),
            unit: t.unit.clone(),
            base_value: a.base_value,
            prediction: a.prediction,
            contributions: a.contributions,
        });
    }
    Ok(Json(ExplainResponse {
        attributions,
        warnings,
    }))
}

pub fn router(bundle: ModelBundle, strict: bool) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/schema", get(schema))
        .route("/model/info", get(model_info))
        .route("/predict", post(predict))
        .route("/explain", post(explain))
        .with_state(Arc::new(AppState::new(bundle, strict)))
}

pub async fn serve(bundle: ModelBundle, addr: SocketAddr, strict: bool) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!(
        "serving {} targets on http://{}",
        bundle.targets.len(),
        listener.local_addr()?
    );
    axum::serve(listener, router(bundle, strict))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
