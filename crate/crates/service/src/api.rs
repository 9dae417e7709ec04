//! REST and WebSocket routes.
//!
//! | method | path | reply |
//! |---|---|---|
//! | GET | `/health` | `{status, version, sessions}` |
//! | GET | `/cases` | case summaries |
//! | POST | `/sessions` | 201, session descriptor |
//! | POST | `/sessions/restore` | 201, session descriptor |
//! | GET, DELETE | `/sessions/{id}` | session info / 204 |
//! | GET | `/sessions/{id}/surface?rev=N` | geometry frame of the deformed surface |
//! | GET | `/sessions/{id}/cloud[?overlay=chamfer]` | geometry frame of the cloud |
//! | POST | `/sessions/{id}/prompts` | 202, `{job}` |
//! | POST | `/sessions/{id}/register` | 202, `{job}` |
//! | GET | `/sessions/{id}/metrics` | one-sided Chamfer distance and diagnostics |
//! | GET | `/sessions/{id}/snapshot` | session snapshot JSON |
//! | GET | `/sessions/{id}/events` | WebSocket event stream |

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Redirect, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tetreg::geom::Point3;
use tetreg::interact::{expand_prompt, Prompt, SessionSnapshot};
use tetreg::pbm::RegistrationMode;
use tokio::sync::broadcast::error::RecvError;
use tower_http::services::ServeDir;

use crate::error::ApiError;
use crate::frame::{WireGeometry, FRAME_CONTENT_TYPE};
use crate::session::{now_millis, ApiSession, Event, JobSpec};
use crate::state::{AppState, CorruptRequest};

pub type Shared = Arc<AppState>;

pub fn router(state: Shared) -> Router {
    let mut r = Router::new()
        .route("/health", get(health))
        .route("/cases", get(cases))
        .route("/sessions", post(create_session))
        .route("/sessions/restore", post(restore_session))
        .route("/sessions/{id}", get(session_info).delete(delete_session))
        .route("/sessions/{id}/surface", get(surface))
        .route("/sessions/{id}/cloud", get(cloud))
        .route("/sessions/{id}/prompts", post(submit_prompt))
        .route("/sessions/{id}/register", post(submit_register))
        .route("/sessions/{id}/metrics", get(metrics))
        .route("/sessions/{id}/snapshot", get(snapshot))
        .route("/sessions/{id}/events", get(events));
    if let Some(ui) = state.catalog.ui_dir() {
        r = r
            .nest_service("/ui", ServeDir::new(ui))
            .route("/", get(|| async { Redirect::temporary("/ui/") }));
    }
    r.with_state(state)
}

/// Parses a JSON body, answering 422 for anything that does not decode.
fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::Unprocessable(format!("malformed request body: {e}")))
}

async fn health(State(s): State<Shared>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION"), "sessions": s.session_count() }))
}

async fn cases(State(s): State<Shared>) -> Json<serde_json::Value> {
    Json(json!({ "cases": s.catalog.summaries() }))
}

#[derive(Debug, Deserialize)]
struct CreateBody {
    case: String,
    #[serde(default)]
    corrupt_patch: Option<CorruptRequest>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionDescriptor {
    pub id: String,
    pub case: String,
    pub revision: u64,
    pub surface_url: String,
    pub cloud_url: String,
    pub events_url: String,
    pub metrics_url: String,
}

impl SessionDescriptor {
    fn of(s: &ApiSession) -> Self {
        let id = &s.core.id;
        SessionDescriptor {
            id: id.clone(),
            case: s.core.case.name.clone(),
            revision: s.core.published().revision,
            surface_url: format!("/sessions/{id}/surface"),
            cloud_url: format!("/sessions/{id}/cloud"),
            events_url: format!("/sessions/{id}/events"),
            metrics_url: format!("/sessions/{id}/metrics"),
        }
    }
}

async fn create_session(State(s): State<Shared>, body: Bytes) -> Result<(StatusCode, Json<SessionDescriptor>), ApiError> {
    let req: CreateBody = parse(&body)?;
    let session = s.create(&req.case, req.corrupt_patch)?;
    Ok((StatusCode::CREATED, Json(SessionDescriptor::of(&session))))
}

async fn restore_session(State(s): State<Shared>, body: Bytes) -> Result<(StatusCode, Json<SessionDescriptor>), ApiError> {
    let snap = SessionSnapshot::from_json(std::str::from_utf8(&body).map_err(|e| ApiError::Unprocessable(e.to_string()))?)?;
    let st = s.clone();
    // Restoring assembles a stiffness matrix; keep it off the async workers.
    let session = tokio::task::spawn_blocking(move || st.restore(&snap))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok((StatusCode::CREATED, Json(SessionDescriptor::of(&session))))
}

async fn session_info(State(s): State<Shared>, Path(id): Path<String>) -> Result<Json<serde_json::Value>, ApiError> {
    let session = s.get(&id)?;
    let p = session.core.published();
    Ok(Json(json!({
        "id": id,
        "case": session.core.case.name,
        "revision": p.revision,
        "busy": session.core.busy(),
        "pending": session.core.pending(),
    })))
}

async fn delete_session(State(s): State<Shared>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    s.remove(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

fn frame_response(bytes: Vec<u8>, etag: String) -> Response {
    (
        [
            (header::CONTENT_TYPE, HeaderValue::from_static(FRAME_CONTENT_TYPE)),
            (header::ETAG, HeaderValue::from_str(&etag).expect("ascii etag")),
        ],
        bytes,
    )
        .into_response()
}

#[derive(Debug, Deserialize)]
struct RevQuery {
    rev: Option<u64>,
}

/// Only the latest revision is retained; any other revision is 410.
async fn surface(State(s): State<Shared>, Path(id): Path<String>, Query(q): Query<RevQuery>) -> Result<Response, ApiError> {
    let p = s.get(&id)?.core.published();
    if let Some(rev) = q.rev.filter(|&r| r != p.revision) {
        return Err(ApiError::Gone(format!("revision {rev} is not retained (latest is {})", p.revision)));
    }
    Ok(frame_response(p.surface_frame.to_vec(), format!("\"{}\"", p.revision)))
}

#[derive(Debug, Deserialize)]
struct CloudQuery {
    overlay: Option<String>,
}

/// The bare cloud is immutable and encoded with revision 0. With
/// `overlay=chamfer` the frame carries each point's Chamfer term at the
/// latest revision.
async fn cloud(State(s): State<Shared>, Path(id): Path<String>, Query(q): Query<CloudQuery>) -> Result<Response, ApiError> {
    let session = s.get(&id)?;
    let points = &session.core.case.assets.cloud;
    match q.overlay.as_deref() {
        None => Ok(frame_response(
            WireGeometry::from_points(0, points).encode(),
            format!("\"cloud-{}\"", &session.core.case.hashes.cloud[..16]),
        )),
        Some("chamfer") => {
            let p = session.core.published();
            let g = WireGeometry::from_points(p.revision, points).with_scalars(&p.chamfer_terms);
            Ok(frame_response(g.encode(), format!("\"cloud-chamfer-{}\"", p.revision)))
        }
        Some(other) => Err(ApiError::Unprocessable(format!("unknown overlay '{other}'"))),
    }
}

#[derive(Debug, Deserialize)]
struct PromptBody {
    #[serde(default)]
    id: Option<u64>,
    #[serde(default)]
    timestamp: Option<u64>,
    line_on_model: Vec<[f64; 3]>,
    line_on_cloud: Vec<[f64; 3]>,
}

fn points(line: &[[f64; 3]]) -> Vec<Point3> {
    line.iter().map(|&[x, y, z]| Point3::new(x, y, z)).collect()
}

async fn submit_prompt(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<(StatusCode, Json<serde_json::Value>), ApiError> {
    let session = s.get(&id)?;
    let req: PromptBody = parse(&body)?;
    let mut prompt = Prompt::new(req.id.unwrap_or(0), points(&req.line_on_model), points(&req.line_on_cloud));
    prompt.timestamp = req.timestamp.unwrap_or_else(now_millis);
    // Reject prompts that cannot be expanded before they reach the queue.
    let p = session.core.published();
    let spacing = tetreg::geom::median_nn_spacing(&session.core.case.assets.cloud);
    expand_prompt(&prompt, &p.surface, &session.core.case.assets.cloud, spacing)?;
    let job = session.submit(JobSpec::Prompt(prompt), s.config.busy_policy)?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "job": job, "base_revision": p.revision }))))
}

#[derive(Debug, Deserialize)]
struct RegisterBody {
    mode: RegistrationMode,
}

async fn submit_register(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<(StatusCode, Json<serde_json::Value>), ApiError> {
    let session = s.get(&id)?;
    let req: RegisterBody = parse(&body)?;
    let base = session.core.published().revision;
    let job = session.submit(JobSpec::Register(req.mode), s.config.busy_policy)?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "job": job, "base_revision": base }))))
}

async fn metrics(State(s): State<Shared>, Path(id): Path<String>) -> Result<Json<serde_json::Value>, ApiError> {
    let p = s.get(&id)?.core.published();
    Ok(Json(json!({
        "revision": p.revision,
        "chamfer": p.chamfer,
        "chamfer_units": "mm^2",
        "cloud_points": p.chamfer_terms.len(),
        "last_job": p.last_job,
    })))
}

async fn snapshot(State(s): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let core = s.get(&id)?.core.clone();
    let snap = tokio::task::spawn_blocking(move || core.snapshot())
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    let body = snap.to_json()?;
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}

async fn events(State(s): State<Shared>, Path(id): Path<String>, ws: WebSocketUpgrade) -> Result<Response, ApiError> {
    let session = s.get(&id)?;
    Ok(ws.on_upgrade(move |socket| stream_events(socket, session)))
}

async fn stream_events(mut socket: WebSocket, session: Arc<ApiSession>) {
    let mut rx = session.core.subscribe();
    let hello = Event::Hello {
        revision: session.core.published().revision,
        busy: session.core.busy(),
    };
    drop(session);
    if send(&mut socket, &hello).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            msg = rx.recv() => match msg {
                Ok(e) => {
                    if send(&mut socket, &e).await.is_err() {
                        return;
                    }
                }
                Err(RecvError::Lagged(n)) => log::debug!("event subscriber skipped {n} events"),
                Err(RecvError::Closed) => return,
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

async fn send(socket: &mut WebSocket, e: &Event) -> Result<(), axum::Error> {
    let text = serde_json::to_string(e).expect("events serialize");
    socket.send(Message::Text(text.into())).await
}
