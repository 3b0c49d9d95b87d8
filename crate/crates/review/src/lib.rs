//! Local HTTP service for the second-pass review of machine-coded units.
//!
//! A data directory holds one subdirectory per project with its corpus
//! table, an optional `project.json` and the append-only decision log.
//! All endpoints live under `/api/v1`; anything else is served from the
//! review UI bundle when one is configured.

pub mod api;
pub mod log;
pub mod project;
pub mod state;

use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;

use axum::Router;
use tower_http::services::{ServeDir, ServeFile};

pub use api::Projects;
pub use project::{load_projects, Project, ProjectConfig, ProjectError};

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub bind: IpAddr,
    pub port: u16,
    pub data_dir: PathBuf,
    /// Built review UI; defaults to `<data_dir>/ui` when that exists.
    pub ui_dir: Option<PathBuf>,
}

/// The full application: API routes plus static UI files.
pub fn app(projects: Projects, ui_dir: Option<PathBuf>) -> Router {
    let router = Router::new().nest("/api/v1", api::api_router(projects));
    match ui_dir {
        Some(dir) => {
            let index = dir.join("index.html");
            router.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(index)))
        }
        None => router,
    }
}

/// Loads every project under the data directory and serves until the task
/// is cancelled.
pub async fn serve(config: ServeConfig) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let data_dir = config.data_dir.clone();
    let projects = tokio::task::spawn_blocking(move || load_projects(&data_dir)).await??;
    let ui_dir = config
        .ui_dir
        .clone()
        .or_else(|| Some(config.data_dir.join("ui")).filter(|d| d.is_dir()));
    let app = app(Arc::new(projects), ui_dir);
    let listener = tokio::net::TcpListener::bind(SocketAddr::new(config.bind, config.port)).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app).await?;
    Ok(())
}
