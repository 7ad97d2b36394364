//! HTTP service for ingesting a site and chatting over its index.
//!
//! Routes live under `/api`; every error is returned as
//! `{"error": {"code": ..., "message": ...}}`.

pub mod config;
mod error;
mod ingest;
pub mod jobs;
mod routes;
pub mod sessions;
mod state;

use std::net::SocketAddr;
use std::sync::Arc;

pub use config::ServiceConfig;
pub use error::{ApiError, ServiceError};
pub use ingest::spawn_ingest;
pub use routes::router;
pub use state::AppState;

/// Serves `state` on an already bound listener until the future is dropped
/// or `shutdown` resolves. Idle sessions are swept in the background.
pub async fn serve_with_shutdown(
    state: Arc<AppState>,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let sweeper = {
        let state = state.clone();
        let period = (state.sessions.ttl() / 2).max(std::time::Duration::from_millis(10));
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(period);
            loop {
                tick.tick().await;
                let removed = state.sessions.sweep();
                if removed > 0 {
                    tracing::debug!(removed, "expired idle sessions");
                }
            }
        })
    };
    let result = axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await;
    sweeper.abort();
    result
}

/// Binds `0.0.0.0:<port>` from the config and serves forever.
pub async fn serve(state: Arc<AppState>) -> Result<(), ServiceError> {
    let addr = SocketAddr::from(([0, 0, 0, 0], state.config.port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, index_count = state.index().len(), "listening");
    serve_with_shutdown(state, listener, std::future::pending()).await?;
    Ok(())
}
