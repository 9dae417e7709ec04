use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tetreg::interact::{Session, SessionSnapshot};
use tetreg::pbm::PipelineConfig;
use tetreg::synth::corrupt_patch;

use crate::catalog::Catalog;
use crate::error::ApiError;
use crate::session::{ApiSession, BusyPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    /// Idle sessions older than this are evicted.
    pub session_ttl_secs: u64,
    pub max_sessions: usize,
    pub busy_policy: BusyPolicy,
    /// Broadcast buffer per session; slow subscribers skip older events.
    pub event_capacity: usize,
    /// Supplied by the embedding program rather than read from config files.
    #[serde(skip)]
    pub pipeline: PipelineConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            session_ttl_secs: 1800,
            max_sessions: 16,
            busy_policy: BusyPolicy::Reject,
            event_capacity: 1024,
            pipeline: PipelineConfig::default(),
        }
    }
}

impl ServiceConfig {
    pub fn session_ttl(&self) -> Duration {
        Duration::from_secs(self.session_ttl_secs)
    }
}

/// Scripted correspondence corruption for demonstration sessions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptRequest {
    pub size: usize,
    /// Tangential slip in mm.
    pub slip: f64,
    #[serde(default)]
    pub seed: u64,
}

pub struct AppState {
    pub catalog: Arc<Catalog>,
    pub config: ServiceConfig,
    sessions: Mutex<HashMap<String, Arc<ApiSession>>>,
}

impl AppState {
    pub fn new(catalog: Catalog, config: ServiceConfig) -> Self {
        AppState {
            catalog: Arc::new(catalog),
            config,
            sessions: Mutex::new(HashMap::new()),
        }
    }

    fn sessions(&self) -> std::sync::MutexGuard<'_, HashMap<String, Arc<ApiSession>>> {
        self.sessions.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn session_count(&self) -> usize {
        self.sessions().len()
    }

    pub fn get(&self, id: &str) -> Result<Arc<ApiSession>, ApiError> {
        let s = self
            .sessions()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("unknown session '{id}'")))?;
        s.core.touch();
        Ok(s)
    }

    pub fn remove(&self, id: &str) -> Result<(), ApiError> {
        self.sessions()
            .remove(id)
            .map(|_| ())
            .ok_or_else(|| ApiError::NotFound(format!("unknown session '{id}'")))
    }

    /// Drops sessions idle for longer than the TTL with no job pending.
    /// Returns the evicted ids.
    pub fn evict_idle(&self, now: Instant) -> Vec<String> {
        let ttl = self.config.session_ttl();
        let mut sessions = self.sessions();
        let stale: Vec<String> = sessions
            .iter()
            .filter(|(_, s)| !s.core.busy() && s.core.idle_for(now) > ttl)
            .map(|(id, _)| id.clone())
            .collect();
        for id in &stale {
            sessions.remove(id);
            log::info!("evicted idle session {id}");
        }
        stale
    }

    fn insert(&self, build: impl FnOnce(String) -> Result<ApiSession, ApiError>) -> Result<Arc<ApiSession>, ApiError> {
        self.evict_idle(Instant::now());
        let mut sessions = self.sessions();
        if sessions.len() >= self.config.max_sessions {
            return Err(ApiError::TooManySessions(self.config.max_sessions));
        }
        let id = uuid::Uuid::new_v4().simple().to_string();
        let s = Arc::new(build(id.clone())?);
        sessions.insert(id, s.clone());
        Ok(s)
    }

    /// New session at revision 0 on a catalog case.
    pub fn create(&self, case: &str, corrupt: Option<CorruptRequest>) -> Result<Arc<ApiSession>, ApiError> {
        let entry = self
            .catalog
            .get(case)
            .ok_or_else(|| ApiError::NotFound(format!("unknown case '{case}'")))?;
        let corr = match corrupt {
            Some(c) => corrupt_patch(&entry.case, c.size, c.slip, c.seed)?.corr,
            None => entry.case.correspondences(),
        };
        self.insert(|id| {
            let session = Session::with_stiffness(entry.assets.clone(), entry.stiffness.clone(), corr, self.config.pipeline.clone())?;
            ApiSession::start(id, entry.clone(), session, self.config.event_capacity)
        })
    }

    /// New session resuming a snapshot of one of the catalog cases.
    pub fn restore(&self, snapshot: &SessionSnapshot) -> Result<Arc<ApiSession>, ApiError> {
        let entry = self
            .catalog
            .by_hashes(&snapshot.assets)
            .ok_or_else(|| ApiError::NotFound("no case matches the snapshot's asset hashes".into()))?;
        let session = Session::restore(snapshot, entry.mesh().clone(), entry.cloud().clone())?;
        self.insert(|id| ApiSession::start(id, entry.clone(), session, self.config.event_capacity))
    }
}
