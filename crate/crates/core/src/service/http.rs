use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;

use super::{EvalStore, FlagSubmission, RatingSubmission, ServiceConfig, ServiceError};

#[derive(Clone)]
pub struct AppState {
    store: Arc<Mutex<EvalStore>>,
}

impl AppState {
    pub fn new(store: EvalStore) -> Self {
        Self {
            store: Arc::new(Mutex::new(store)),
        }
    }

    fn lock(&self) -> MutexGuard<'_, EvalStore> {
        // A panic mid-request leaves the store consistent (writes validate
        // before mutating), so poisoning is not fatal.
        self.store.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::UnknownListener(_) | ServiceError::UnknownStimulus(_) => {
                StatusCode::NOT_FOUND
            }
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (
            status,
            Json(serde_json::json!({ "error": self.to_string() })),
        )
            .into_response()
    }
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::Validation(e.to_string()))
}

async fn next(
    State(s): State<AppState>,
    Path(listener): Path<String>,
) -> Result<Response, ServiceError> {
    Ok(Json(s.lock().next_screen(&listener)?).into_response())
}

async fn ratings(
    State(s): State<AppState>,
    Path(listener): Path<String>,
    body: Bytes,
) -> Result<Response, ServiceError> {
    let sub: RatingSubmission = parse_body(&body)?;
    Ok(Json(s.lock().submit_ratings(&listener, sub)?).into_response())
}

async fn flags(
    State(s): State<AppState>,
    Path(listener): Path<String>,
    body: Bytes,
) -> Result<Response, ServiceError> {
    let sub: FlagSubmission = parse_body(&body)?;
    Ok(Json(s.lock().submit_flags(&listener, sub)?).into_response())
}

fn csv_response(body: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], body).into_response()
}

async fn export_ratings(State(s): State<AppState>) -> Result<Response, ServiceError> {
    Ok(csv_response(s.lock().export_ratings()?))
}

async fn export_flags(State(s): State<AppState>) -> Result<Response, ServiceError> {
    Ok(csv_response(s.lock().export_flags()?))
}

async fn audio(
    State(s): State<AppState>,
    Path(file): Path<String>,
) -> Result<Response, ServiceError> {
    let token = file
        .strip_suffix(".wav")
        .ok_or_else(|| ServiceError::UnknownStimulus(file.clone()))?;
    let path = s.lock().audio_path(token)?;
    let bytes = tokio::fs::read(&path).await.map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => ServiceError::UnknownStimulus(token.to_string()),
        _ => ServiceError::Io(e),
    })?;
    Ok(([(header::CONTENT_TYPE, "audio/wav")], bytes).into_response())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/session/{listener}/next", get(next))
        .route("/api/session/{listener}/ratings", post(ratings))
        .route("/api/session/{listener}/flags", post(flags))
        .route("/api/export/ratings.csv", get(export_ratings))
        .route("/api/export/flags.csv", get(export_flags))
        .route("/audio/{file}", get(audio))
        .with_state(state)
}

/// Binds and serves until Ctrl-C.
pub async fn serve(config: &ServiceConfig) -> Result<(), ServiceError> {
    let store = EvalStore::from_config(config)?;
    let app = router(AppState::new(store));
    let listener = tokio::net::TcpListener::bind((config.bind.as_str(), config.port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
