//! REST binding of [`Service`].

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;

use super::{Action, ApiError, EventBatch, InstructionBody, Service};
use crate::store::{Outcome, TaskKind};

/// Largest accepted request body (one audio chunk).
pub const MAX_BODY_BYTES: usize = 32 * 1024 * 1024;

pub const WORKER_HEADER: &str = "x-worker-id";

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let retry = self.retry_after_s;
        let mut res = (status, Json(self)).into_response();
        if let Some(s) = retry {
            res.headers_mut()
                .insert(header::RETRY_AFTER, HeaderValue::from(s));
        }
        res
    }
}

type Shared = State<Arc<Service>>;
type ApiResult<T> = Result<Json<T>, ApiError>;

async fn call<T, F>(svc: Arc<Service>, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&Service) -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&svc))
        .await
        .unwrap_or_else(|e| Err(ApiError::internal(format!("handler failed: {e}"))))
}

fn body<T>(r: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    r.map(|Json(t)| t)
        .map_err(|e| ApiError::unprocessable(e.body_text()))
}

#[derive(Deserialize)]
struct ConfigQuery {
    session: Option<String>,
}

async fn config(State(svc): Shared, Query(q): Query<ConfigQuery>) -> impl IntoResponse {
    call(svc, move |s| s.client_config(q.session.as_deref()))
        .await
        .map(Json)
}

async fn env_graph(State(svc): Shared, Path(env): Path<String>) -> Result<Response, ApiError> {
    let bytes = call(svc, move |s| s.environment_graph(&env)).await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

async fn env_pano(
    State(svc): Shared,
    Path((env, node)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    let (ct, bytes) = call(svc, move |s| s.panorama(&env, &node)).await?;
    Ok(([(header::CONTENT_TYPE, ct)], bytes).into_response())
}

#[derive(Serialize, Deserialize)]
pub struct CreateSession {
    /// Falls back to the `x-worker-id` header.
    #[serde(default)]
    pub worker_id: Option<String>,
    pub kind: TaskKind,
}

async fn create_session(
    State(svc): Shared,
    headers: HeaderMap,
    req: Result<Json<CreateSession>, JsonRejection>,
) -> Result<Response, ApiError> {
    let req = body(req)?;
    let worker = req
        .worker_id
        .or_else(|| {
            headers
                .get(WORKER_HEADER)
                .and_then(|v| v.to_str().ok())
                .map(str::to_owned)
        })
        .ok_or_else(|| ApiError::unprocessable("worker_id is required"))?;
    let view = call(svc, move |s| s.create_session(&worker, req.kind)).await?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn get_session(State(svc): Shared, Path(id): Path<String>) -> impl IntoResponse {
    call(svc, move |s| s.session_view(&id)).await.map(Json)
}

async fn post_events(
    State(svc): Shared,
    Path(id): Path<String>,
    req: Result<Json<EventBatch>, JsonRejection>,
) -> impl IntoResponse {
    let batch = body(req)?;
    call(svc, move |s| s.post_events(&id, batch))
        .await
        .map(Json)
}

async fn guide_transition(
    svc: Arc<Service>,
    id: String,
    action: Action,
) -> ApiResult<super::SessionView> {
    call(svc, move |s| s.transition(&id, action))
        .await
        .map(Json)
}

async fn start_recording(State(svc): Shared, Path(id): Path<String>) -> impl IntoResponse {
    guide_transition(svc, id, Action::StartRecording).await
}

async fn pause(State(svc): Shared, Path(id): Path<String>) -> impl IntoResponse {
    guide_transition(svc, id, Action::Pause).await
}

async fn resume(State(svc): Shared, Path(id): Path<String>) -> impl IntoResponse {
    guide_transition(svc, id, Action::Resume).await
}

async fn stop_recording(State(svc): Shared, Path(id): Path<String>) -> impl IntoResponse {
    guide_transition(svc, id, Action::StopRecording).await
}

#[derive(Serialize, Deserialize)]
pub struct TranscriptBody {
    pub text: String,
}

async fn transcript(
    State(svc): Shared,
    Path(id): Path<String>,
    req: Result<Json<TranscriptBody>, JsonRejection>,
) -> impl IntoResponse {
    let req = body(req)?;
    call(svc, move |s| s.set_transcript(&id, &req.text))
        .await
        .map(Json)
}

async fn submit(State(svc): Shared, Path(id): Path<String>) -> impl IntoResponse {
    call(svc, move |s| s.submit(&id)).await.map(Json)
}

#[derive(Serialize, Deserialize)]
pub struct ChunkAck {
    pub chunk_index: u32,
    pub size_bytes: usize,
}

async fn upload_chunk(
    State(svc): Shared,
    Path((id, chunk_index)): Path<(String, u32)>,
    bytes: Bytes,
) -> impl IntoResponse {
    let size_bytes = bytes.len();
    call(svc, move |s| s.upload_audio(&id, chunk_index, &bytes))
        .await
        .map(|()| {
            Json(ChunkAck {
                chunk_index,
                size_bytes,
            })
        })
}

#[derive(Serialize, Deserialize)]
pub struct FinalizeBody {
    pub total_chunks: u32,
}

async fn finalize(
    State(svc): Shared,
    Path(id): Path<String>,
    req: Result<Json<FinalizeBody>, JsonRejection>,
) -> impl IntoResponse {
    let req = body(req)?;
    call(svc, move |s| s.finalize_audio(&id, req.total_chunks))
        .await
        .map(Json)
}

/// JSON form of a text instruction; audio instructions are served as
/// `audio/wav` bytes.
#[derive(Serialize, Deserialize)]
pub struct TextInstruction {
    pub text: String,
}

async fn instruction(State(svc): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(match call(svc, move |s| s.instruction(&id)).await? {
        InstructionBody::Audio(bytes) => {
            ([(header::CONTENT_TYPE, "audio/wav")], bytes).into_response()
        }
        InstructionBody::Text(text) => Json(TextInstruction { text }).into_response(),
    })
}

async fn waveform(State(svc): Shared, Path(id): Path<String>) -> impl IntoResponse {
    call(svc, move |s| s.waveform(&id)).await.map(Json)
}

#[derive(Serialize, Deserialize)]
pub struct CompleteBody {
    pub outcome: Outcome,
}

async fn complete(
    State(svc): Shared,
    Path(id): Path<String>,
    req: Result<Json<CompleteBody>, JsonRejection>,
) -> impl IntoResponse {
    let req = body(req)?;
    call(svc, move |s| s.complete(&id, req.outcome))
        .await
        .map(Json)
}

#[derive(Deserialize)]
struct SummaryQuery {
    env: Option<String>,
}

async fn summary(State(svc): Shared, Query(q): Query<SummaryQuery>) -> impl IntoResponse {
    call(svc, move |s| s.dashboard_summary(q.env.as_deref()))
        .await
        .map(Json)
}

async fn replay(State(svc): Shared, Path(id): Path<String>) -> impl IntoResponse {
    call(svc, move |s| s.replay(&id)).await.map(Json)
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/api/config", get(config))
        .route("/api/environments/{env}/graph", get(env_graph))
        .route("/api/environments/{env}/pano/{node}", get(env_pano))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/events", post(post_events))
        .route("/api/sessions/{id}/start-recording", post(start_recording))
        .route("/api/sessions/{id}/pause", post(pause))
        .route("/api/sessions/{id}/resume", post(resume))
        .route("/api/sessions/{id}/stop-recording", post(stop_recording))
        .route("/api/sessions/{id}/transcript", post(transcript))
        .route("/api/sessions/{id}/submit", post(submit))
        .route("/api/sessions/{id}/audio/finalize", post(finalize))
        .route("/api/sessions/{id}/audio/{chunk_index}", put(upload_chunk))
        .route("/api/sessions/{id}/instruction", get(instruction))
        .route("/api/sessions/{id}/waveform", get(waveform))
        .route("/api/sessions/{id}/complete", post(complete))
        .route("/api/dashboard/summary", get(summary))
        .route("/api/annotations/{id}/replay", get(replay))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(service)
}

/// A server running on its own thread and runtime. Dropping the handle
/// shuts it down.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server exits.
    pub fn join(mut self) -> std::io::Result<()> {
        self.thread
            .take()
            .expect("joined once")
            .join()
            .unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked")))
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Binds `addr` (use port 0 for an ephemeral port) and serves in the
/// background.
pub fn spawn(service: Arc<Service>, addr: &str) -> std::io::Result<ServerHandle> {
    let listener = std::net::TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let local = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::Builder::new()
        .name("pangea-http".into())
        .spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener)?;
                axum::serve(listener, router(service))
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
            })
        })?;
    Ok(ServerHandle {
        addr: local,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
