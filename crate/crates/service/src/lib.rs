//! HTTP and WebSocket front end for interactive registration sessions.
//!
//! Sessions wrap [`tetreg::interact::Session`]. Jobs (prompts and full
//! registrations) run one at a time per session on a blocking worker, and
//! their progress is streamed as JSON events. Geometry travels as binary
//! frames, see [`frame`].

pub mod api;
pub mod catalog;
pub mod error;
pub mod frame;
pub mod session;
pub mod state;

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

pub use api::{router, SessionDescriptor};
pub use catalog::{CaseEntry, CaseSummary, Catalog};
pub use error::{ApiError, ServiceError};
pub use frame::{FrameError, WireGeometry};
pub use session::{BusyPolicy, Event, JobKind};
pub use state::{AppState, CorruptRequest, ServiceConfig};

/// A bound, not yet running server.
pub struct Server {
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
}

impl Server {
    /// Loads the asset directory and binds. Fails on a malformed directory
    /// or a busy port.
    pub async fn bind(addr: &str, assets: &Path, config: ServiceConfig) -> Result<Self, ServiceError> {
        let catalog = Catalog::load(assets)?;
        log::info!("loaded {} case(s) from {}", catalog.len(), assets.display());
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|source| ServiceError::Bind {
            addr: addr.to_string(),
            source,
        })?;
        Ok(Server {
            listener,
            state: Arc::new(AppState::new(catalog, config)),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener has an address")
    }

    pub fn state(&self) -> Arc<AppState> {
        self.state.clone()
    }

    /// Serves until the process ends, evicting idle sessions periodically.
    pub async fn run(self) -> Result<(), ServiceError> {
        let every = (self.state.config.session_ttl() / 4).clamp(Duration::from_millis(50), Duration::from_secs(60));
        let st = self.state.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(every);
            loop {
                tick.tick().await;
                st.evict_idle(Instant::now());
            }
        });
        log::info!("listening on {}", self.local_addr());
        axum::serve(self.listener, router(self.state)).await.map_err(ServiceError::Serve)
    }
}
