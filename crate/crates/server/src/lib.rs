//! HTTP API over a dpvis workspace.

pub mod api;
pub mod error;
pub mod views;
pub mod workspace;

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;

pub use api::{router, AppState, Job, JobStatus};
pub use error::{Error, ErrorBody, ErrorDetail, Result};
pub use workspace::{TrainOptions, TrainSpec, Workspace};

/// Default listening port.
pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub host: IpAddr,
    pub port: u16,
    pub data_dir: PathBuf,
    /// Workspace state file; `data_dir/workspace.json` when absent.
    pub workspace_file: Option<PathBuf>,
}

impl ServerConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServerConfig {
            host: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: DEFAULT_PORT,
            data_dir: data_dir.into(),
            workspace_file: None,
        }
    }
}

/// Serves the API until ctrl-c.
pub async fn serve(cfg: ServerConfig) -> Result<()> {
    let ws = Workspace::open(&cfg.data_dir, cfg.workspace_file.as_deref())?;
    let app = router(AppState::new(ws));
    let addr = SocketAddr::new(cfg.host, cfg.port);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            log::info!("shutting down");
        })
        .await?;
    Ok(())
}
