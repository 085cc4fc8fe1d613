//! HTTP/JSON service over the sbpm toolkit.
//!
//! Routes:
//!
//! ```text
//! GET  /health
//! GET  /models                      stored model ids
//! PUT  /models/{id}                 store a model document (XML or JSON)
//! GET  /models/{id}                 XML, or JSON with Accept: application/json
//! POST /models/{id}/validate        ValidationReport
//! POST /models/{id}/explore         body: ExplorationBounds (optional)
//! POST /instances                   body: CreateInstance
//! POST /instances/{id}/step         body: StepRequest (optional)
//! POST /instances/{id}/messages     body: InjectMessage
//! GET  /instances/{id}/trace        XML, or JSON with Accept: application/json
//! DELETE /instances/{id}
//! GET  /notations                   stored notation ids
//! PUT  /notations/{id}
//! GET  /notations/{id}
//! POST /notations/{id}/analyze      NotationAnalysis
//! ```
//!
//! Stored documents are always re-serialized canonically, so a canonical
//! document reads back byte for byte. Errors use
//! [`ErrorBody`](sbpm_core::api::ErrorBody) and keep the
//! library's error codes.

pub mod error;
pub mod instances;
pub mod repo;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use bytes::Bytes;
use clap::Parser;
use sbpm_core::api::{
    CreateInstance, InjectMessage, Injected, InstanceCreated, NotationAnalysis, StepRequest, StepResult,
};
use sbpm_core::check::{validate_document, ValidationReport};
use sbpm_core::engine::instantiate;
use sbpm_core::explore::{state_space, ExplorationBounds, ExplorationResult};
use sbpm_core::notation::{design_lints, notation_violations, ontological_analysis, NotationDefinition};
use sbpm_core::persistence::{
    from_xml, notation_from_xml, parse_document, trace_to_xml, Document, DocumentKind, PersistError,
};
use serde::de::DeserializeOwned;

pub use error::ApiError;
use instances::Instances;
use repo::{valid_id, Collection, Repository};

#[derive(Debug, Clone, Parser)]
#[command(name = "sbpm-service", about = "Serve the sbpm toolkit over HTTP")]
pub struct Config {
    /// Address to listen on.
    #[arg(long, env = "SBPM_LISTEN", default_value = "127.0.0.1:7878")]
    pub listen: SocketAddr,
    /// Directory holding the document repository.
    #[arg(long, env = "SBPM_DATA_DIR", default_value = "sbpm-data")]
    pub data_dir: PathBuf,
    /// Seconds an idle instance is kept.
    #[arg(long, env = "SBPM_INSTANCE_TTL", default_value_t = 3600)]
    pub instance_ttl: u64,
}

pub struct AppState {
    pub repo: Repository,
    pub instances: Instances,
}

type Shared = Arc<AppState>;
type ApiResult<T> = Result<T, ApiError>;

impl AppState {
    pub async fn new(config: &Config) -> std::io::Result<Shared> {
        Ok(Arc::new(AppState {
            repo: Repository::open(&config.data_dir).await?,
            instances: Instances::new(Duration::from_secs(config.instance_ttl)),
        }))
    }
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(serde_json::json!({ "status": "ok" })) }))
        .route("/models", get(list_models))
        .route("/models/{id}", get(get_model).put(put_model))
        .route("/models/{id}/validate", post(validate_model))
        .route("/models/{id}/explore", post(explore_model))
        .route("/instances", post(create_instance))
        .route("/instances/{id}", axum::routing::delete(delete_instance))
        .route("/instances/{id}/step", post(step_instance))
        .route("/instances/{id}/messages", post(inject))
        .route("/instances/{id}/trace", get(get_trace))
        .route("/notations", get(list_notations))
        .route("/notations/{id}", get(get_notation).put(put_notation))
        .route("/notations/{id}/analyze", post(analyze_notation))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such route") })
        .with_state(state)
}

/// Serves until the listener fails or ctrl-c. Idle instances are reaped
/// every TTL/4 (at least once a second).
pub async fn serve(listener: tokio::net::TcpListener, state: Shared) -> std::io::Result<()> {
    let reaper = Arc::clone(&state);
    let period = (reaper.instances.ttl() / 4).max(Duration::from_secs(1));
    let reap = tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            let n = reaper.instances.reap().await;
            if n > 0 {
                tracing::info!(expired = n, "dropped idle instances");
            }
        }
    });
    let result = axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await;
    reap.abort();
    result
}

fn io(e: std::io::Error) -> ApiError {
    tracing::error!(error = %e, "repository failure");
    ApiError::internal(format!("repository failure: {e}"))
}

fn check_id(id: &str) -> ApiResult<()> {
    if valid_id(id) {
        Ok(())
    } else {
        Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "BadId",
            format!("'{id}' is not a valid id (letters, digits, '-', '_', '.')"),
        ))
    }
}

fn wants_json(headers: &HeaderMap) -> bool {
    headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.contains("application/json"))
}

fn sends_json(headers: &HeaderMap) -> bool {
    headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.contains("json"))
}

fn render(headers: &HeaderMap, doc: &Document) -> Response {
    if wants_json(headers) {
        ([(header::CONTENT_TYPE, "application/json")], doc.to_json()).into_response()
    } else {
        ([(header::CONTENT_TYPE, "application/xml")], doc.to_xml()).into_response()
    }
}

/// Parses an uploaded document by content type and checks its kind.
fn read_document(headers: &HeaderMap, body: &[u8], expected: DocumentKind) -> ApiResult<Document> {
    let text = std::str::from_utf8(body).map_err(|e| {
        let at = &body[..e.valid_up_to()];
        let line = at.iter().filter(|b| **b == b'\n').count() as u32 + 1;
        PersistError::Malformed {
            line,
            column: at.iter().rev().take_while(|b| **b != b'\n').count() as u32 + 1,
            message: "document is not valid UTF-8".into(),
        }
    })?;
    let doc = if sends_json(headers) {
        Document::from_json(text)?
    } else {
        parse_document(text)?
    };
    if doc.kind() != expected {
        return Err(PersistError::WrongKind {
            expected: expected.as_str().into(),
            found: doc.kind().as_str().into(),
        }
        .into());
    }
    Ok(doc)
}

/// JSON request body; an empty body means the default.
fn json_or_default<T: DeserializeOwned + Default>(body: &[u8]) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    json_body(body)
}

fn json_body<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

async fn load_model(state: &AppState, id: &str) -> ApiResult<Document> {
    check_id(id)?;
    let xml = state.repo.get(Collection::Models, id).await.map_err(io)?;
    let xml = xml.ok_or_else(|| ApiError::not_found("model", id))?;
    let (model, layout) = from_xml(&xml)?;
    Ok(Document::Model { model, layout })
}

async fn load_notation(state: &AppState, id: &str) -> ApiResult<NotationDefinition> {
    check_id(id)?;
    let xml = state.repo.get(Collection::Notations, id).await.map_err(io)?;
    let xml = xml.ok_or_else(|| ApiError::not_found("notation", id))?;
    Ok(notation_from_xml(&xml)?)
}

async fn list_models(State(state): State<Shared>) -> ApiResult<Json<Vec<String>>> {
    Ok(Json(state.repo.list(Collection::Models).await.map_err(io)?))
}

async fn list_notations(State(state): State<Shared>) -> ApiResult<Json<Vec<String>>> {
    Ok(Json(state.repo.list(Collection::Notations).await.map_err(io)?))
}

async fn put_model(State(state): State<Shared>, Path(id): Path<String>, headers: HeaderMap, body: Bytes) -> ApiResult<Response> {
    check_id(&id)?;
    let doc = read_document(&headers, &body, DocumentKind::Model)?;
    let Document::Model { model, layout } = &doc else { unreachable!("kind checked") };
    let report = validate_document(model, layout.as_ref());
    let stored = state
        .repo
        .put(Collection::Models, &id, &doc.to_xml(), Some(report))
        .await
        .map_err(io)?;
    tracing::info!(model = %id, created = stored.created, "stored model");
    let status = if stored.created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(stored)).into_response())
}

async fn get_model(State(state): State<Shared>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult<Response> {
    check_id(&id)?;
    if !wants_json(&headers) {
        let xml = state.repo.get(Collection::Models, &id).await.map_err(io)?;
        let xml = xml.ok_or_else(|| ApiError::not_found("model", &id))?;
        return Ok(([(header::CONTENT_TYPE, "application/xml")], xml).into_response());
    }
    Ok(render(&headers, &load_model(&state, &id).await?))
}

async fn validate_model(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<ValidationReport>> {
    check_id(&id)?;
    if let Some(cached) = state.repo.meta(Collection::Models, &id).await.map_err(io)?.and_then(|m| m.validation) {
        return Ok(Json(cached));
    }
    let Document::Model { model, layout } = load_model(&state, &id).await? else { unreachable!() };
    Ok(Json(validate_document(&model, layout.as_ref())))
}

async fn explore_model(State(state): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<ExplorationResult>> {
    let bounds: ExplorationBounds = json_or_default(&body)?;
    let Document::Model { model, .. } = load_model(&state, &id).await? else { unreachable!() };
    let result = tokio::task::spawn_blocking(move || state_space(&model, bounds))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(result))
}

async fn create_instance(State(state): State<Shared>, body: Bytes) -> ApiResult<Response> {
    let req: CreateInstance = json_body(&body)?;
    let Document::Model { model, .. } = load_model(&state, &req.model_id).await? else { unreachable!() };
    let instance = instantiate(Arc::new(model), req.config)?;
    let agents = instance.agents().iter().map(|a| a.id.clone()).collect();
    let status = instance.status();
    let instance_id = state.instances.insert(req.model_id.clone(), instance).await;
    tracing::info!(instance = %instance_id, model = %req.model_id, "instantiated");
    let created = InstanceCreated {
        instance_id,
        model_id: req.model_id,
        status,
        agents,
    };
    Ok((StatusCode::CREATED, Json(created)).into_response())
}

async fn delete_instance(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    if state.instances.remove(&id).await {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(ApiError::not_found("instance", &id))
    }
}

async fn step_instance(State(state): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<StepResult>> {
    let req: StepRequest = json_or_default(&body)?;
    let entry = state.instances.get(&id).await.ok_or_else(|| ApiError::not_found("instance", &id))?;
    let mut guard = entry.lock_owned().await;
    guard.touch();
    let result = tokio::task::spawn_blocking(move || {
        let events = guard.instance.advance(req.count).to_vec();
        StepResult {
            events,
            status: guard.instance.status(),
        }
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(result))
}

async fn inject(State(state): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let req: InjectMessage = json_body(&body)?;
    let entry = state.instances.get(&id).await.ok_or_else(|| ApiError::not_found("instance", &id))?;
    let mut guard = entry.lock().await;
    guard.touch();
    guard.instance.inject_message(&req.from, &req.to, &req.message, req.payload)?;
    let injected = Injected {
        status: guard.instance.status(),
        event: guard.instance.events().last().cloned().expect("injection records an event"),
    };
    Ok((StatusCode::ACCEPTED, Json(injected)).into_response())
}

async fn get_trace(State(state): State<Shared>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult<Response> {
    let entry = state.instances.get(&id).await.ok_or_else(|| ApiError::not_found("instance", &id))?;
    let mut guard = entry.lock().await;
    guard.touch();
    let trace = guard.instance.trace();
    drop(guard);
    if wants_json(&headers) {
        Ok(render(&headers, &Document::Trace(trace)))
    } else {
        Ok(([(header::CONTENT_TYPE, "application/xml")], trace_to_xml(&trace)).into_response())
    }
}

async fn put_notation(
    State(state): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    check_id(&id)?;
    let doc = read_document(&headers, &body, DocumentKind::Notation)?;
    let Document::Notation(n) = &doc else { unreachable!("kind checked") };
    let v = notation_violations(n);
    if !v.is_empty() {
        return Err(ApiError::semantic(&v));
    }
    let stored = state
        .repo
        .put(Collection::Notations, &id, &doc.to_xml(), None)
        .await
        .map_err(io)?;
    let status = if stored.created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(stored)).into_response())
}

async fn get_notation(State(state): State<Shared>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult<Response> {
    Ok(render(&headers, &Document::Notation(load_notation(&state, &id).await?)))
}

async fn analyze_notation(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<NotationAnalysis>> {
    let n = load_notation(&state, &id).await?;
    Ok(Json(NotationAnalysis {
        report: ontological_analysis(&n),
        lints: design_lints(&n),
    }))
}
