use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use tetreg::geom::Point3;
use tetreg::interact::{Prompt, PromptOutcome, Session, SessionSnapshot};
use tetreg::metrics::chamfer_terms;
use tetreg::pbm::{Diagnostics, RegistrationMode};
use tetreg::pyramid::TraceRow;
use tokio::sync::{broadcast, mpsc};

use crate::catalog::CaseEntry;
use crate::error::ApiError;
use crate::frame::WireGeometry;

/// What to do with a job submitted while another is in flight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BusyPolicy {
    /// Answer 409.
    #[default]
    Reject,
    /// Append to the session's FIFO queue.
    Queue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Prompt,
    Register,
}

/// WebSocket event envelope, one JSON object per text message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    /// First message on every connection.
    Hello {
        revision: u64,
        busy: bool,
    },
    Accepted {
        job: u64,
        kind: JobKind,
    },
    /// One optimizer step; `loss` is the total objective, `align` its
    /// alignment term in mm².
    Progress {
        job: u64,
        level: usize,
        step: usize,
        loss: f64,
        align: f64,
    },
    Done {
        job: u64,
        revision: u64,
        chamfer: f64,
    },
    Failed {
        job: u64,
        reason: String,
    },
}

#[derive(Debug, Clone)]
pub enum JobSpec {
    Prompt(Prompt),
    Register(RegistrationMode),
}

impl JobSpec {
    pub fn kind(&self) -> JobKind {
        match self {
            JobSpec::Prompt(_) => JobKind::Prompt,
            JobSpec::Register(_) => JobKind::Register,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PromptSummary {
    pub x_m: usize,
    pub y_m: usize,
    pub new_pairs: usize,
    pub icp_rms: f64,
    pub icp_fallback: bool,
    pub max_increment: f64,
    pub preprocess_seconds: f64,
    pub solve_seconds: f64,
    pub total_seconds: f64,
}

impl From<&PromptOutcome> for PromptSummary {
    fn from(o: &PromptOutcome) -> Self {
        PromptSummary {
            x_m: o.region.x_m.len(),
            y_m: o.region.y_m.len(),
            new_pairs: o.new_pairs.len(),
            icp_rms: o.icp_rms,
            icp_fallback: o.icp_fallback,
            max_increment: o.max_increment,
            preprocess_seconds: o.preprocess_seconds,
            solve_seconds: o.solve_seconds,
            total_seconds: o.total_seconds,
        }
    }
}

/// Diagnostics of the most recent finished job.
#[derive(Debug, Clone, Serialize)]
pub struct JobSummary {
    pub job: u64,
    pub kind: JobKind,
    pub diagnostics: Diagnostics,
    pub prompt: Option<PromptSummary>,
}

/// Read-only view of the latest revision. Handlers read this without
/// touching the session lock, so they stay fast during a solve.
pub struct Published {
    pub revision: u64,
    pub surface: Arc<Vec<Point3>>,
    pub surface_frame: Arc<Vec<u8>>,
    pub chamfer: f64,
    pub chamfer_terms: Arc<Vec<f64>>,
    pub last_job: Option<JobSummary>,
}

impl Published {
    fn of(session: &Session, last_job: Option<JobSummary>) -> Result<Self, tetreg::Error> {
        let mesh = &session.assets().mesh;
        let surface = session.deformed_surface().to_vec();
        let u = session.displacement();
        let magnitude: Vec<f64> = (0..mesh.boundary_count)
            .map(|i| (u[3 * i].powi(2) + u[3 * i + 1].powi(2) + u[3 * i + 2].powi(2)).sqrt())
            .collect();
        let frame = WireGeometry::from_points(session.revision(), &surface)
            .with_triangles(&mesh.boundary_faces)
            .with_scalars(&magnitude)
            .encode();
        let terms = chamfer_terms(&session.assets().cloud, &surface)?;
        let chamfer = terms.iter().sum::<f64>() / terms.len() as f64;
        Ok(Published {
            revision: session.revision(),
            surface: Arc::new(surface),
            surface_frame: Arc::new(frame),
            chamfer,
            chamfer_terms: Arc::new(terms),
            last_job,
        })
    }
}

pub struct Job {
    pub id: u64,
    pub spec: JobSpec,
}

/// State shared between request handlers and the session's worker.
pub struct SessionCore {
    pub id: String,
    pub case: Arc<CaseEntry>,
    session: Mutex<Session>,
    published: RwLock<Arc<Published>>,
    pending: AtomicUsize,
    next_job: AtomicU64,
    last_activity: Mutex<Instant>,
    events: broadcast::Sender<Event>,
}

impl SessionCore {
    pub fn published(&self) -> Arc<Published> {
        self.published.read().expect("published lock").clone()
    }

    pub fn busy(&self) -> bool {
        self.pending.load(Ordering::SeqCst) > 0
    }

    pub fn pending(&self) -> usize {
        self.pending.load(Ordering::SeqCst)
    }

    pub fn touch(&self) {
        *self.last_activity.lock().expect("activity lock") = Instant::now();
    }

    pub fn idle_for(&self, now: Instant) -> std::time::Duration {
        now.saturating_duration_since(*self.last_activity.lock().expect("activity lock"))
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Event> {
        self.events.subscribe()
    }

    /// Blocks until any running job finishes.
    pub fn snapshot(&self) -> SessionSnapshot {
        self.session.lock().unwrap_or_else(|e| e.into_inner()).snapshot()
    }

    fn emit(&self, e: Event) {
        // No subscribers is not an error.
        let _ = self.events.send(e);
    }

    fn run(&self, job: Job) -> Event {
        let mut session = self.session.lock().unwrap_or_else(|e| e.into_inner());
        let mut progress = |row: &TraceRow| {
            self.emit(Event::Progress {
                job: job.id,
                level: row.level,
                step: row.step,
                loss: row.terms.total,
                align: row.terms.align,
            })
        };
        let result = match &job.spec {
            JobSpec::Prompt(p) => session
                .apply_prompt_with_progress(p, Some(&mut progress))
                .map(|o| (o.diagnostics.clone(), Some(PromptSummary::from(&o)))),
            JobSpec::Register(mode) => session.register_with_progress(*mode, Some(&mut progress)).map(|d| (d, None)),
        };
        let published = result.and_then(|(diagnostics, prompt)| {
            Published::of(
                &session,
                Some(JobSummary {
                    job: job.id,
                    kind: job.spec.kind(),
                    diagnostics,
                    prompt,
                }),
            )
        });
        match published {
            Ok(p) => {
                let done = Event::Done {
                    job: job.id,
                    revision: p.revision,
                    chamfer: p.chamfer,
                };
                *self.published.write().expect("published lock") = Arc::new(p);
                done
            }
            Err(e) => Event::Failed {
                job: job.id,
                reason: e.to_string(),
            },
        }
    }
}

/// A live session: the shared core plus the sending end of its job queue.
/// Dropping it stops the worker once queued jobs have drained.
pub struct ApiSession {
    pub core: Arc<SessionCore>,
    jobs: mpsc::UnboundedSender<Job>,
}

impl ApiSession {
    /// Must be called inside a Tokio runtime; spawns the session worker.
    pub fn start(id: String, case: Arc<CaseEntry>, session: Session, event_capacity: usize) -> Result<Self, ApiError> {
        let published = Published::of(&session, None)?;
        let (events, _) = broadcast::channel(event_capacity.max(1));
        let core = Arc::new(SessionCore {
            id,
            case,
            session: Mutex::new(session),
            published: RwLock::new(Arc::new(published)),
            pending: AtomicUsize::new(0),
            next_job: AtomicU64::new(0),
            last_activity: Mutex::new(Instant::now()),
            events,
        });
        let (jobs, rx) = mpsc::unbounded_channel();
        tokio::spawn(worker(core.clone(), rx));
        Ok(ApiSession { core, jobs })
    }

    /// Enqueues a job and returns its id. Under [`BusyPolicy::Reject`] a
    /// session with a job in flight answers [`ApiError::Busy`].
    pub fn submit(&self, spec: JobSpec, policy: BusyPolicy) -> Result<u64, ApiError> {
        match policy {
            BusyPolicy::Reject => {
                self.core
                    .pending
                    .compare_exchange(0, 1, Ordering::SeqCst, Ordering::SeqCst)
                    .map_err(|_| ApiError::Busy)?;
            }
            BusyPolicy::Queue => {
                self.core.pending.fetch_add(1, Ordering::SeqCst);
            }
        }
        self.core.touch();
        let id = self.core.next_job.fetch_add(1, Ordering::SeqCst) + 1;
        self.core.emit(Event::Accepted { job: id, kind: spec.kind() });
        if self.jobs.send(Job { id, spec }).is_err() {
            self.core.pending.fetch_sub(1, Ordering::SeqCst);
            return Err(ApiError::Internal("session worker stopped".into()));
        }
        Ok(id)
    }
}

async fn worker(core: Arc<SessionCore>, mut rx: mpsc::UnboundedReceiver<Job>) {
    while let Some(job) = rx.recv().await {
        let id = job.id;
        let c = core.clone();
        let event = tokio::task::spawn_blocking(move || c.run(job)).await.unwrap_or_else(|e| Event::Failed {
            job: id,
            reason: format!("job panicked: {e}"),
        });
        if let Event::Failed { reason, .. } = &event {
            log::warn!("session {} job {id} failed: {reason}", core.id);
        }
        // Clear the busy flag before announcing completion so a client
        // reacting to `done` can submit immediately.
        core.pending.fetch_sub(1, Ordering::SeqCst);
        core.touch();
        core.emit(event);
    }
}

pub fn now_millis() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}
