//! HTTP/JSON API over an experiment store: listings, results, traces, risk
//! evaluation, what-if requests and recorded decisions.

mod openapi;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use coplan::experiment::{
    now, run, to_outcomes, Actor, ConfigDocument, DecisionRecord, ExperimentError, ExperimentMeta, Origin, ResultRow,
    RunStatus, RunStore, OVERRIDE_SOURCE,
};
use coplan::risk::{breakpoints, parse_penalties, regret_table, RiskError};

pub use openapi::openapi;

/// Keys whose numbers are α values rather than currency.
const NON_CURRENCY: [&str; 3] = ["alpha", "from", "to"];

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Store(#[from] ExperimentError),
    #[error("server: {0}")]
    Server(std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub done: usize,
    pub total: usize,
}

#[derive(Clone)]
pub struct AppState {
    store: RunStore,
    progress: Arc<Mutex<BTreeMap<String, Progress>>>,
    /// Serializes experiment creation and decision appends.
    writes: Arc<tokio::sync::Mutex<()>>,
}

impl AppState {
    pub fn new(store: RunStore) -> Self {
        AppState {
            store,
            progress: Arc::default(),
            writes: Arc::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

/// Error body: `{"error": {"code", "message", "fields"}}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    fields: Vec<FieldError>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            fields: Vec::new(),
        }
    }

    fn invalid(fields: Vec<FieldError>) -> Self {
        let names: Vec<&str> = fields.iter().map(|f| f.field.as_str()).collect();
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            code: "validation_failed",
            message: format!("invalid fields: {}", names.join(", ")),
            fields,
        }
    }

    fn field(field: &str, message: impl Into<String>) -> Self {
        Self::invalid(vec![FieldError {
            field: field.into(),
            message: message.into(),
        }])
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code, "message": self.message, "fields": self.fields}});
        (self.status, Json(body)).into_response()
    }
}

impl From<ExperimentError> for ApiError {
    fn from(e: ExperimentError) -> Self {
        let msg = e.to_string();
        match e {
            ExperimentError::UnknownExperiment(_) | ExperimentError::InvalidId(_) => {
                ApiError::new(StatusCode::NOT_FOUND, "unknown_experiment", msg)
            }
            ExperimentError::UnknownScenario { .. } => ApiError::new(StatusCode::NOT_FOUND, "unknown_scenario", msg),
            ExperimentError::Incomplete(_) => ApiError::new(StatusCode::CONFLICT, "experiment_incomplete", msg),
            ExperimentError::MissingCells(_) => ApiError::new(StatusCode::CONFLICT, "missing_cells", msg),
            ExperimentError::Risk(r) => risk_error(r),
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "store_error", msg),
        }
    }
}

fn risk_error(e: RiskError) -> ApiError {
    let field = match e {
        RiskError::OrientationMismatch | RiskError::UnknownStrategy(_) | RiskError::InvalidPenalty { .. } => "penalties",
        RiskError::PenaltySyntax(_) | RiskError::DuplicateLabel(_) => "penalties",
        _ => return ApiError::new(StatusCode::CONFLICT, "risk_unavailable", e.to_string()),
    };
    ApiError::field(field, e.to_string())
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/openapi.json", get(|| async { Json(openapi()) }))
        .route("/experiments", get(list))
        .route("/experiments/{id}", get(experiment))
        .route("/experiments/{id}/results", get(results))
        .route("/experiments/{id}/traces/{scenario}", get(trace))
        .route("/experiments/{id}/risk", get(risk))
        .route("/experiments/{id}/decision", post(record_decision).get(decisions))
        .route("/whatif", post(whatif))
        .with_state(state)
}

/// Binds first so a busy port is reported before serving.
pub async fn serve(root: PathBuf, addr: &str) -> Result<(), ServiceError> {
    let store = RunStore::open(root)?;
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|source| ServiceError::Bind {
        addr: addr.into(),
        source,
    })?;
    serve_on(listener, store).await
}

pub async fn serve_on(listener: tokio::net::TcpListener, store: RunStore) -> Result<(), ServiceError> {
    let app = router(AppState::new(store));
    axum::serve(listener, app).await
        .map_err(ServiceError::Server)
}

async fn health() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

#[derive(Serialize)]
struct Listing {
    #[serde(flatten)]
    meta: ExperimentMeta,
    #[serde(skip_serializing_if = "Option::is_none")]
    progress: Option<Progress>,
}

impl AppState {
    fn listing(&self, meta: ExperimentMeta) -> Listing {
        let progress = self.progress.lock().expect("progress lock").get(&meta.id).copied();
        Listing { meta, progress }
    }

    fn complete_rows(&self, id: &str) -> ApiResult<(ExperimentMeta, Vec<ResultRow>)> {
        let meta = self.store.meta(id)?;
        if !meta.is_complete() {
            return Err(ExperimentError::Incomplete(id.into()).into());
        }
        let rows = self.store.rows(id)?;
        Ok((meta, rows))
    }
}

async fn list(State(st): State<AppState>) -> ApiResult<Json<Vec<Listing>>> {
    let metas = st.store.list()?;
    Ok(Json(metas.into_iter().map(|m| st.listing(m)).collect()))
}

async fn experiment(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Listing>> {
    let meta = st.store.meta(&id)?;
    Ok(Json(st.listing(meta)))
}

/// Rounds currency to whole units, leaving α-valued keys untouched.
fn integral(v: Value) -> Value {
    fn walk(v: Value, key: Option<&str>) -> Value {
        match v {
            Value::Number(n) if !key.is_some_and(|k| NON_CURRENCY.contains(&k)) => match n.as_f64() {
                Some(f) if n.is_f64() => json!(f.round() as i64),
                _ => Value::Number(n),
            },
            Value::Array(a) => Value::Array(a.into_iter().map(|x| walk(x, key)).collect()),
            Value::Object(o) => Value::Object(o.into_iter().map(|(k, x)| {
                let x = walk(x, Some(&k));
                (k, x)
            }).collect()),
            other => other,
        }
    }
    walk(v, None)
}

fn rows_json(rows: &[ResultRow]) -> Value {
    integral(serde_json::to_value(rows).expect("rows serialize"))
}

async fn results(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let (meta, rows) = st.complete_rows(&id)?;
    let failures: Vec<Value> = st
        .store
        .result(&id)?
        .map(|r| {
            r.failures()
                .into_iter()
                .map(|(s, e)| json!({"scenario": s, "error": e}))
                .collect()
        })
        .unwrap_or_default();
    Ok(Json(json!({
        "id": meta.id,
        "columns": coplan::experiment::RESULT_COLUMNS,
        "rows": rows_json(&rows),
        "failures": failures,
    })))
}

async fn trace(State(st): State<AppState>, Path((id, scenario)): Path<(String, String)>) -> ApiResult<Response> {
    let text = st.store.trace(&id, &scenario)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}

fn risk_payload(rows: &[ResultRow], actor: Actor, penalties: &BTreeMap<String, f64>) -> ApiResult<Value> {
    let m = to_outcomes(rows, actor, penalties)?;
    let diagram = breakpoints(&m).map_err(risk_error)?;
    let regret = regret_table(&m);
    Ok(integral(json!({
        "actor": actor,
        "penalties": penalties,
        "strategies": m.strategies,
        "scenarios": m.scenarios,
        "values": m.values,
        "diagram": diagram,
        "regret": regret,
    })))
}

#[derive(Deserialize)]
struct RiskQuery {
    actor: Option<String>,
    penalties: Option<String>,
}

async fn risk(State(st): State<AppState>, Path(id): Path<String>, Query(q): Query<RiskQuery>) -> ApiResult<Json<Value>> {
    let (_, rows) = st.complete_rows(&id)?;
    let actor: Actor = q
        .actor
        .as_deref()
        .ok_or_else(|| ApiError::field("actor", "required: supplier or customer"))?
        .parse()
        .map_err(|e: ExperimentError| ApiError::field("actor", e.to_string()))?;
    let penalties = parse_penalties(q.penalties.as_deref().unwrap_or("")).map_err(risk_error)?;
    Ok(Json(risk_payload(&rows, actor, &penalties)?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfRequest {
    pub base: String,
    #[serde(default)]
    pub penalties: BTreeMap<String, f64>,
    #[serde(default)]
    pub inventory_cap: Option<f64>,
    #[serde(default)]
    pub supplier_strategy: Option<String>,
    #[serde(default)]
    pub visibility: Option<String>,
}

fn labels(rows: &[ResultRow], actor: Actor) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in rows {
        let l = match actor {
            Actor::Supplier => &r.strategy,
            Actor::Customer => &r.visibility,
        };
        if !out.contains(l) {
            out.push(l.clone());
        }
    }
    out
}

fn check_labels(rows: &[ResultRow], strategy: Option<&str>, visibility: Option<&str>) -> Vec<FieldError> {
    let mut errors = Vec::new();
    for (field, value, actor) in [
        ("supplier_strategy", strategy, Actor::Supplier),
        ("visibility", visibility, Actor::Customer),
    ] {
        if let Some(v) = value {
            let known = labels(rows, actor);
            if !known.iter().any(|k| k == v) {
                errors.push(FieldError {
                    field: field.into(),
                    message: format!("unknown label '{v}' (known: {})", known.join(", ")),
                });
            }
        }
    }
    errors
}

async fn whatif(State(st): State<AppState>, body: Result<Json<WhatIfRequest>, axum::extract::rejection::JsonRejection>) -> ApiResult<Response> {
    let Json(req) = body.map_err(|e| ApiError::field("body", e.body_text()))?;
    let mut errors = Vec::new();
    for (k, v) in &req.penalties {
        if !(v.is_finite() && *v >= 0.0) {
            errors.push(FieldError {
                field: format!("penalties.{k}"),
                message: "must be a non-negative number".into(),
            });
        }
    }
    if let Some(cap) = req.inventory_cap {
        if !(cap.is_finite() && cap >= 0.0) {
            errors.push(FieldError {
                field: "inventory_cap".into(),
                message: "must be a non-negative number".into(),
            });
        }
    }
    let base = match st.store.meta(&req.base) {
        Ok(m) => Some(m),
        Err(_) => {
            errors.push(FieldError {
                field: "base".into(),
                message: format!("unknown experiment '{}'", req.base),
            });
            None
        }
    };
    if !errors.is_empty() {
        return Err(ApiError::invalid(errors));
    }
    let base = base.expect("checked above");
    if !base.is_complete() {
        return Err(ExperimentError::Incomplete(base.id).into());
    }
    let rows = st.store.rows(&base.id)?;
    let errors = check_labels(&rows, req.supplier_strategy.as_deref(), req.visibility.as_deref());
    if !errors.is_empty() {
        return Err(ApiError::invalid(errors));
    }

    let base_doc = st.store.config(&base.id)?;
    let base_cap = base_doc.as_ref().and_then(|d| d.config.run.inventory_cap);
    if req.inventory_cap.is_none() || req.inventory_cap == base_cap {
        let body = json!({
            "kind": "reaggregated",
            "base": base.id,
            "supplier": risk_payload(&rows, Actor::Supplier, &BTreeMap::new())?,
            "customer": risk_payload(&rows, Actor::Customer, &req.penalties)?,
        });
        return Ok(Json(body).into_response());
    }

    let Some(mut doc) = base_doc else {
        return Err(ApiError::field("inventory_cap", "base experiment has no configuration to re-simulate"));
    };
    doc.config.run.inventory_cap = req.inventory_cap;
    doc.sources.insert("run.inventory_cap".into(), OVERRIDE_SOURCE.into());
    let id = doc.config.hash();
    let _guard = st.writes.lock().await;
    if !st.store.exists(&id) {
        let mut meta = ExperimentMeta::new(&id, Origin::Simulation);
        meta.parent = Some(base.id.clone());
        meta.config_hash = Some(id.clone());
        meta.delta.insert("run.inventory_cap".into(), json!(req.inventory_cap));
        st.store.write_config(&id, &doc)?;
        st.store.write_meta(&meta)?;
        spawn_run(st.clone(), meta, doc);
    }
    let body = json!({
        "kind": "derived",
        "base": base.id,
        "experiment": id,
        "progress": format!("/experiments/{id}"),
    });
    Ok((StatusCode::ACCEPTED, Json(body)).into_response())
}

fn spawn_run(st: AppState, mut meta: ExperimentMeta, doc: ConfigDocument) {
    let total = doc.config.expand().map_or(0, |s| s.len());
    st.progress
        .lock()
        .expect("progress lock")
        .insert(meta.id.clone(), Progress { done: 0, total });
    tokio::task::spawn_blocking(move || {
        let id = meta.id.clone();
        let report = |done: usize, total: usize| {
            st.progress.lock().expect("progress lock").insert(id.clone(), Progress { done, total });
        };
        let outcome = run(&doc.config, Some(&report)).and_then(|r| st.store.write_run(&mut meta, &r));
        if let Err(e) = outcome {
            meta.status = RunStatus::Failed;
            meta.error = Some(e.to_string());
            meta.finished_unix = Some(now());
            let _ = st.store.write_meta(&meta);
        }
        st.progress.lock().expect("progress lock").remove(&id);
    });
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecisionRequest {
    supplier_strategy: String,
    visibility: String,
    author: String,
    #[serde(default)]
    note: Option<String>,
}

async fn record_decision(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<DecisionRequest>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<Response> {
    let (_, rows) = st.complete_rows(&id)?;
    let Json(req) = body.map_err(|e| ApiError::field("body", e.body_text()))?;
    let mut errors = check_labels(&rows, Some(&req.supplier_strategy), Some(&req.visibility));
    if req.author.trim().is_empty() {
        errors.push(FieldError {
            field: "author".into(),
            message: "required".into(),
        });
    }
    if !errors.is_empty() {
        return Err(ApiError::invalid(errors));
    }
    let record = DecisionRecord {
        supplier_strategy: req.supplier_strategy,
        visibility: req.visibility,
        author: req.author,
        note: req.note,
        recorded_unix: now(),
    };
    let _guard = st.writes.lock().await;
    st.store.append_decision(&id, &record)?;
    Ok((StatusCode::CREATED, Json(record)).into_response())
}

async fn decisions(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Vec<DecisionRecord>>> {
    Ok(Json(st.store.decisions(&id)?))
}
