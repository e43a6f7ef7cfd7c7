//! Session service: starts pipelines on replay, synthetic or network
//! sources, fans their events out to WebSocket subscribers, takes eye-status
//! tags and persists every session as `<data_dir>/<session_id>.jsonl`.

pub mod api;
mod error;
mod request;
mod service;
mod session;

use std::future::Future;
use std::sync::Arc;

pub use api::router;
pub use error::ServiceError;
pub use request::{SourceRequest, StartRequest, TagRequest};
pub use service::{ReportResponse, Service, ServiceConfig, DATA_DIR_ENV};
pub use session::{Frame, SessionHandle, SessionStatus, Subscription};

/// Serves the API on `listener` until `shutdown` resolves, then stops every
/// live session.
pub async fn serve(
    listener: tokio::net::TcpListener,
    service: Arc<Service>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let app = router(service.clone());
    let result = axum::serve(listener, app).with_graceful_shutdown(shutdown).await;
    tokio::task::spawn_blocking(move || service.shutdown())
        .await
        .map_err(std::io::Error::other)?;
    result
}
