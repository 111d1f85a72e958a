//! Live elicitation sessions over HTTP.
//!
//! A session proposes one question at a time to a human respondent. Each
//! accepted answer refits the posterior and selects the next question until
//! the budget runs out.
//!
//! | Method | Path | Body | Reply |
//! |---|---|---|---|
//! | POST | `/sessions` | [`api::CreateSession`] | 201 with [`api::SessionView`] |
//! | GET | `/sessions/{id}` | | [`api::SessionView`] |
//! | POST | `/sessions/{id}/answers` | [`api::SubmitAnswer`] | [`api::SessionView`] |
//!
//! Errors carry an [`api::ErrorBody`] whose `reason` is one of
//! `session_not_found` (404), `stale_token` or `session_finished` (409),
//! `invalid_answer` (422), `invalid_request` (400), or `engine_failure`,
//! `storage_failure` and `internal_error` (500).

pub mod api;
pub mod error;
mod session;
mod store;

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;

pub use error::{Result, ServiceError};
pub use session::Session;
pub use store::SessionStore;

use api::{CreateSession, SessionView, SubmitAnswer};

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_status))
        .route("/sessions/{id}/answers", post(submit_answer))
        .with_state(store)
}

/// Serves the API on `listener` until the process stops.
pub async fn serve(listener: tokio::net::TcpListener, store: Arc<SessionStore>) -> std::io::Result<()> {
    axum::serve(listener, router(store)).await
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T> {
    serde_json::from_slice(body).map_err(|e| ServiceError::InvalidRequest(e.to_string()))
}

/// Runs model fitting and design selection off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

async fn create_session(
    State(store): State<Arc<SessionStore>>,
    body: Bytes,
) -> Result<(StatusCode, Json<SessionView>)> {
    let request: CreateSession = parse(&body)?;
    let view = blocking(move || store.create(request)).await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn session_status(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> Result<Json<SessionView>> {
    Ok(Json(store.get(&id)?))
}

async fn submit_answer(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SessionView>> {
    let answer: SubmitAnswer = parse(&body)?;
    Ok(Json(blocking(move || store.submit(&id, answer)).await?))
}
