//! HTTP control API and the WebSocket live stream.
//!
//! ```text
//! POST /sessions              StartRequest -> 201 SessionMeta
//! POST /sessions/{id}/tags    {"status":"open"|"closed"} -> 200 EyeStatusTag
//! POST /sessions/{id}/stop    -> 200 SessionStatus
//! GET  /sessions/{id}         -> 200 SessionStatus
//! GET  /sessions/{id}/report  -> 200 ReportResponse
//! GET  /sessions/{id}/live    WebSocket, one text frame per event
//! ```
//!
//! Errors are `{"error": "..."}` with status 400, 404 or 409.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::ws::rejection::WebSocketUpgradeRejection;
use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use tokio::sync::broadcast::error::RecvError;

use crate::error::ServiceError;
use crate::request::{StartRequest, TagRequest};
use crate::service::Service;
use crate::session::Subscription;

/// Close code sent to a subscriber that fell too far behind.
pub const CLOSE_OVERFLOW: u16 = 1008;
pub const OVERFLOW_REASON: &str = "overflow";

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status_code()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/sessions", post(start))
        .route("/sessions/{id}", get(status))
        .route("/sessions/{id}/tags", post(tag))
        .route("/sessions/{id}/stop", post(stop))
        .route("/sessions/{id}/report", get(report))
        .route("/sessions/{id}/live", get(live))
        .with_state(service)
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::Invalid(format!("request body: {e}")))
}

/// Runs a blocking service call off the async executor.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

async fn start(State(svc): State<Arc<Service>>, body: Bytes) -> Result<Response, ServiceError> {
    let req: StartRequest = parse_body(&body)?;
    let meta = blocking(move || svc.start_session(req)).await?;
    Ok((StatusCode::CREATED, Json(meta)).into_response())
}

async fn status(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    Ok(Json(svc.status(&id)?).into_response())
}

async fn tag(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ServiceError> {
    let req: TagRequest = parse_body(&body)?;
    Ok(Json(svc.record_tag(&id, req.status)?).into_response())
}

async fn stop(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    let status = blocking(move || svc.stop_session(&id)).await?;
    Ok(Json(status).into_response())
}

async fn report(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    let report = blocking(move || svc.report(&id)).await?;
    Ok(Json(report).into_response())
}

async fn live(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    ws: Result<WebSocketUpgrade, WebSocketUpgradeRejection>,
) -> Result<Response, ServiceError> {
    let session = svc.session(&id)?;
    let ws = match ws {
        Ok(ws) => ws,
        Err(rejection) => return Ok(rejection.into_response()),
    };
    let sub = session.subscribe();
    Ok(ws.on_upgrade(move |socket| pump(socket, sub)))
}

fn text(json: &str) -> Message {
    Message::Text(json.into())
}

fn close(code: u16, reason: &str) -> Message {
    Message::Close(Some(CloseFrame {
        code,
        reason: reason.into(),
    }))
}

async fn pump(mut socket: WebSocket, sub: Subscription) {
    let Subscription {
        snapshot,
        ended,
        mut rx,
    } = sub;
    let first = serde_json::to_string(&snapshot).expect("event serializes");
    if socket.send(text(&first)).await.is_err() {
        return;
    }
    if let Some(end) = ended {
        let frame = serde_json::to_string(&vigil_core::SessionEvent::Ended(end)).expect("event serializes");
        let _ = socket.send(text(&frame)).await;
        let _ = socket.send(close(1000, "ended")).await;
        return;
    }
    loop {
        tokio::select! {
            next = rx.recv() => match next {
                Ok(frame) => {
                    if socket.send(text(&frame.json)).await.is_err() {
                        return;
                    }
                    if frame.is_end {
                        let _ = socket.send(close(1000, "ended")).await;
                        return;
                    }
                }
                Err(RecvError::Lagged(_)) => {
                    let _ = socket.send(close(CLOSE_OVERFLOW, OVERFLOW_REASON)).await;
                    return;
                }
                Err(RecvError::Closed) => {
                    let _ = socket.send(close(1000, "closed")).await;
                    return;
                }
            },
            incoming = socket.recv() => match incoming {
                None | Some(Err(_)) | Some(Ok(Message::Close(_))) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}
