//! JSON-over-HTTP API.
//!
//! | method | path                     | body / query                     | reply              |
//! |--------|--------------------------|----------------------------------|--------------------|
//! | POST   | `/sessions`              | `{mode?, config?, overrides?}`   | 201 `SessionInfo`  |
//! | GET    | `/sessions`              |                                  | `[SessionInfo]`    |
//! | GET    | `/sessions/{id}/next`    | `?checker=ID`                    | `Next`             |
//! | POST   | `/sessions/{id}/answer`  | `{checker, screen_id, answer}`   | `Ack`              |
//! | GET    | `/sessions/{id}/report`  |                                  | `Report`           |
//! | GET    | `/sessions/{id}/events`  |                                  | `[Event]`          |
//!
//! Engine calls run on the blocking pool; a session's mutex serializes its
//! checkers, so a `next` issued while a batch closes (and the classifiers
//! retrain) waits for the retrained state instead of stalling the server.

use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use claimcheck_core::config::Config;
use claimcheck_core::engine::{Ack, Answer, AnswerError, Event, Mode, Next, Report};
use serde::Deserialize;
use serde_json::json;
use thiserror::Error;

use crate::store::{ApiSession, SessionInfo, Store, StoreError};

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("unknown session `{0}`")]
    NotFound(String),
    #[error(transparent)]
    Answer(#[from] AnswerError),
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("internal error: {0}")]
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let message = self.to_string();
        let (status, body) = match &self {
            ApiError::NotFound(_) => (StatusCode::NOT_FOUND, json!({ "error": "not_found", "message": message })),
            ApiError::Answer(AnswerError::OutOfOrder { expected, .. }) => {
                (StatusCode::CONFLICT, json!({ "error": "out_of_order", "message": message, "expected": expected }))
            }
            ApiError::Answer(AnswerError::Conflict(_)) => (StatusCode::CONFLICT, json!({ "error": "conflict", "message": message })),
            ApiError::Answer(AnswerError::Malformed { message: detail, position }) => {
                (StatusCode::UNPROCESSABLE_ENTITY, json!({ "error": "malformed", "message": detail, "position": position }))
            }
            ApiError::BadRequest(_) => (StatusCode::BAD_REQUEST, json!({ "error": "bad_request", "message": message })),
            ApiError::Store(StoreError::Core(_) | StoreError::Corpus(_) | StoreError::UnknownProfile(_)) => {
                (StatusCode::UNPROCESSABLE_ENTITY, json!({ "error": "invalid_session", "message": message }))
            }
            ApiError::Store(_) | ApiError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": "internal", "message": message })),
        };
        (status, Json(body)).into_response()
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CreateSession {
    /// Defaults to `scrutinizer`.
    pub mode: Option<Mode>,
    /// Partial configuration; missing keys take their defaults.
    pub config: Option<Config>,
    /// `section.key=value` assignments applied on top of `config`.
    pub overrides: Vec<String>,
}

#[derive(Debug, Deserialize)]
pub struct CheckerQuery {
    pub checker: String,
}

#[derive(Debug, Deserialize)]
pub struct AnswerRequest {
    pub checker: String,
    pub screen_id: String,
    pub answer: Answer,
}

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}/next", get(next_screen))
        .route("/sessions/{id}/answer", post(answer))
        .route("/sessions/{id}/report", get(report))
        .route("/sessions/{id}/events", get(events))
        .with_state(store)
}

fn session(store: &Store, id: &str) -> Result<Arc<Mutex<ApiSession>>, ApiError> {
    store.get(id).ok_or_else(|| ApiError::NotFound(id.to_string()))
}

/// Runs `f` on the session under its lock, off the async workers.
async fn with_session<T: Send + 'static>(handle: Arc<Mutex<ApiSession>>, f: impl FnOnce(&mut ApiSession) -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(move || {
        let mut guard = handle.lock().map_err(|_| ApiError::Internal("session lock poisoned".into()))?;
        Ok(f(&mut guard))
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
}

fn json_body<T>(body: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    body.map(|Json(v)| v).map_err(|e| ApiError::BadRequest(e.body_text()))
}

async fn create_session(State(store): State<Arc<Store>>, body: Result<Json<CreateSession>, JsonRejection>) -> Result<(StatusCode, Json<SessionInfo>), ApiError> {
    let request = json_body(body)?;
    let mut config = request.config.unwrap_or_default();
    for assignment in &request.overrides {
        config.set(assignment).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    }
    config.validate().map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let mode = request.mode.unwrap_or(Mode::Scrutinizer);
    let info = tokio::task::spawn_blocking(move || -> Result<SessionInfo, ApiError> {
        let (_, handle) = store.create(mode, config)?;
        let info = handle.lock().map_err(|_| ApiError::Internal("session lock poisoned".into()))?.info();
        Ok(info)
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok((StatusCode::CREATED, Json(info)))
}

async fn list_sessions(State(store): State<Arc<Store>>) -> Result<Json<Vec<SessionInfo>>, ApiError> {
    let mut out = Vec::new();
    for handle in store.handles() {
        out.push(with_session(handle, |s| s.info()).await?);
    }
    Ok(Json(out))
}

async fn next_screen(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    query: Result<Query<CheckerQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Json<Next>, ApiError> {
    let Query(q) = query.map_err(|e| ApiError::BadRequest(e.body_text()))?;
    let handle = session(&store, &id)?;
    let next = with_session(handle, move |s| s.next(&q.checker)).await??;
    Ok(Json(next))
}

async fn answer(State(store): State<Arc<Store>>, Path(id): Path<String>, body: Result<Json<AnswerRequest>, JsonRejection>) -> Result<Json<Ack>, ApiError> {
    let handle = session(&store, &id)?;
    let request = json_body(body)?;
    let ack = with_session(handle, move |s| s.answer(&request.checker, &request.screen_id, request.answer)).await???;
    Ok(Json(ack))
}

async fn report(State(store): State<Arc<Store>>, Path(id): Path<String>) -> Result<Json<Report>, ApiError> {
    let handle = session(&store, &id)?;
    Ok(Json(with_session(handle, |s| s.report()).await?))
}

async fn events(State(store): State<Arc<Store>>, Path(id): Path<String>) -> Result<Json<Vec<Event>>, ApiError> {
    let handle = session(&store, &id)?;
    Ok(Json(with_session(handle, |s| s.events().to_vec()).await?))
}
