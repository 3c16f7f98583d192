//! HTTP service and command-line front end for the interview engine.

pub mod api;
pub mod auth;
pub mod config;
pub mod error;

pub use api::{router, AppState, TurnResponse};
pub use config::{Secret, ServiceConfig, StartupError};

/// Binds and serves until ctrl-c.
pub async fn serve(config: &ServiceConfig, state: AppState) -> Result<(), StartupError> {
    let listener = tokio::net::TcpListener::bind(config.bind)
        .await
        .map_err(|e| StartupError::Bind {
            addr: config.bind,
            message: e.to_string(),
        })?;
    tracing::info!(
        addr = %config.bind,
        catalog_version = %state.catalog.version,
        questions = state.catalog.total_questions(),
        "interview service listening"
    );
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| StartupError::Bind {
            addr: config.bind,
            message: e.to_string(),
        })
}
