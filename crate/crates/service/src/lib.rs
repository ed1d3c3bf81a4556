//! HTTP service over the retrieval core: asynchronous ingestion, search
//! with metadata filters, streamed mask explanations, and health/catalog
//! reads. Every error response has the body
//! `{"error": {"code": "...", "message": "..."}}`.

mod api;
pub mod config;
mod error;
pub mod jobs;
pub mod state;

use std::sync::Arc;

use thiserror::Error;
use tokio::net::TcpListener;

pub use api::router;
pub use config::ServiceConfig;
pub use error::ApiError;
pub use state::AppState;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Startup(#[from] state::StartupError),
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

/// Opens state and binds the listener; nothing is served yet. Split from
/// [`serve`] so callers can report bind failures before blocking.
pub async fn bind(cfg: ServiceConfig) -> Result<(TcpListener, Arc<AppState>), ServeError> {
    let addr = cfg.listen.clone();
    let state = AppState::open(cfg)?;
    let listener = TcpListener::bind(&addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })?;
    Ok((listener, state))
}

/// Serves until Ctrl-C.
pub async fn serve(listener: TcpListener, state: Arc<AppState>) -> Result<(), ServeError> {
    let app = router(state);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
