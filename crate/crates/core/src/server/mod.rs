//! Annotation service: environments, the guide/follower session protocol,
//! background audio upload, alignment jobs and the monitoring dashboard.
//!
//! [`Service`] holds the protocol logic and is transport-agnostic;
//! [`http`] maps it onto REST endpoints.

pub mod http;
pub mod jobs;
pub mod session;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::align::{self, TimedTranscript};
use crate::clock::IdGenerator;
use crate::environment::{self, LoadError};
use crate::metrics::{self, EvalParams, MetricsReport, PathEval};
use crate::navgraph::{NavPath, NavigationGraph};
use crate::store::{
    AnnotationDoc, AnnotationFilter, AnnotationStatus, BlobRef, Instruction, Outcome, Store,
    StoreError, TaskKind, TaskPayload, TaskRecord, DEFAULT_LEASE_MINUTES,
};
use crate::trace::{Pose, PoseTrace};
use crate::waveform::{self, WaveformEnvelope, WaveformError};

pub use jobs::{run_alignment_job, AlignmentWorkers, JobOutcome, RetryPolicy};
pub use session::{Action, EventReceipt, Session, SessionState};

pub const HEARTBEAT_MS: u64 = 200;
pub const CLIENT_EVENT_BUFFER_CAP: usize = 10_000;

/// Error returned by every service operation; maps one-to-one onto an
/// HTTP status.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub status: u16,
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_seq: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retry_after_s: Option<u64>,
}

impl ApiError {
    fn new(status: u16, error: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            error: error.to_owned(),
            message: message.into(),
            expected_seq: None,
            retry_after_s: None,
        }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(404, "not_found", message)
    }

    pub fn conflict(error: &str, message: impl Into<String>) -> Self {
        Self::new(409, error, message)
    }

    pub fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(422, "unprocessable", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(500, "internal", message)
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}: {}", self.status, self.error, self.message)
    }
}

impl std::error::Error for ApiError {}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound { .. } => ApiError::not_found(e.to_string()),
            StoreError::BadKey(_) => ApiError::unprocessable(e.to_string()),
            other => ApiError::internal(other.to_string()),
        }
    }
}

impl From<LoadError> for ApiError {
    fn from(e: LoadError) -> Self {
        match e {
            LoadError::Store(s) => s.into(),
            other => ApiError::internal(other.to_string()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServiceSettings {
    pub waveform_bins: usize,
    pub lease_minutes: u32,
    pub eval: EvalParams,
    /// Open a follower task for every submitted guide annotation.
    pub auto_follower_tasks: bool,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        ServiceSettings {
            waveform_bins: waveform::DEFAULT_BINS,
            lease_minutes: DEFAULT_LEASE_MINUTES,
            eval: EvalParams::default(),
            auto_follower_tasks: true,
        }
    }
}

/// Bootstrap settings for browser clients (`GET /api/config`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientConfig {
    pub waveform_bins: usize,
    pub heartbeat_ms: u64,
    pub event_buffer_cap: usize,
    pub lease_minutes: u32,
    /// Present when the config was requested for a specific session.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restrict_movement: Option<bool>,
}

/// What clients see of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub worker_id: String,
    pub kind: TaskKind,
    pub task: TaskRecord,
    pub state: SessionState,
    pub current_node: String,
    pub next_event_seq: u64,
    pub audio: Option<BlobRef>,
    pub annotation_id: Option<String>,
}

impl From<&Session> for SessionView {
    fn from(s: &Session) -> Self {
        SessionView {
            session_id: s.session_id.clone(),
            worker_id: s.worker_id.clone(),
            kind: s.kind,
            task: s.task.clone(),
            state: s.state,
            current_node: s.current_node.clone(),
            next_event_seq: s.next_event_seq,
            audio: s.audio.clone(),
            annotation_id: s.annotation_id.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventBatch {
    pub seq: u64,
    pub events: Vec<Pose>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventAck {
    pub accepted_through_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub annotation_id: String,
    pub state: SessionState,
    pub path: NavPath,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InstructionBody {
    Audio(Vec<u8>),
    Text(String),
}

/// Everything needed to animate one annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replay {
    pub annotation_id: String,
    pub kind: TaskKind,
    pub status: AnnotationStatus,
    pub pose_trace: PoseTrace,
    /// The guide's own transcript, or for a follower the transcript of the
    /// guide recording it followed.
    pub timed_transcript: Option<TimedTranscript>,
    pub path: NavPath,
    pub reference_path: Option<NavPath>,
    pub eval: Option<PathEval>,
    /// Guide only: pose indices per timed token.
    pub synchronization: Option<Vec<(usize, Vec<usize>)>>,
}

type CachedGraph = (String, Arc<NavigationGraph>);

pub struct Service {
    store: Store,
    ids: Arc<dyn IdGenerator>,
    settings: ServiceSettings,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    graphs: Mutex<HashMap<String, CachedGraph>>,
    jobs: Option<AlignmentWorkers>,
}

impl Service {
    pub fn new(store: Store, ids: Arc<dyn IdGenerator>, settings: ServiceSettings) -> Self {
        Service {
            store,
            ids,
            settings,
            sessions: Mutex::new(HashMap::new()),
            graphs: Mutex::new(HashMap::new()),
            jobs: None,
        }
    }

    /// Attaches an alignment worker pool and queues any raw guide
    /// annotations left over from a previous run.
    pub fn with_alignment(mut self, workers: AlignmentWorkers) -> Result<Self, StoreError> {
        workers.enqueue_raw(&self.store)?;
        self.jobs = Some(workers);
        Ok(self)
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn settings(&self) -> &ServiceSettings {
        &self.settings
    }

    /// Blocks until queued alignment jobs have finished.
    pub fn wait_for_alignment(&self) {
        if let Some(jobs) = &self.jobs {
            jobs.wait_idle();
        }
    }

    pub fn client_config(&self, session_id: Option<&str>) -> Result<ClientConfig, ApiError> {
        let restrict_movement = match session_id {
            Some(id) => Some(self.session_view(id)?.task.restrict_movement),
            None => None,
        };
        Ok(ClientConfig {
            waveform_bins: self.settings.waveform_bins,
            heartbeat_ms: HEARTBEAT_MS,
            event_buffer_cap: CLIENT_EVENT_BUFFER_CAP,
            lease_minutes: self.settings.lease_minutes,
            restrict_movement,
        })
    }

    pub fn graph(&self, env: &str) -> Result<Arc<NavigationGraph>, ApiError> {
        let hash = self
            .store
            .blob_ref(&environment::graph_key(env))?
            .ok_or_else(|| ApiError::not_found(format!("unknown environment {env:?}")))?
            .content_hash;
        if let Some((cached_hash, g)) = self.graphs.lock().unwrap().get(env) {
            if *cached_hash == hash {
                return Ok(g.clone());
            }
        }
        let g = Arc::new(environment::load_graph(&self.store, env)?);
        self.graphs
            .lock()
            .unwrap()
            .insert(env.to_owned(), (hash, g.clone()));
        Ok(g)
    }

    pub fn environment_graph(&self, env: &str) -> Result<Vec<u8>, ApiError> {
        environment::graph_document(&self.store, env).map_err(|e| match e {
            StoreError::NotFound { .. } | StoreError::BadKey(_) => {
                ApiError::not_found(format!("unknown environment {env:?}"))
            }
            other => other.into(),
        })
    }

    /// Panorama bytes and content type.
    pub fn panorama(&self, env: &str, node: &str) -> Result<(&'static str, Vec<u8>), ApiError> {
        let graph = self.graph(env)?;
        let node = graph
            .node(node)
            .ok_or_else(|| ApiError::not_found(format!("unknown node {node:?} in {env:?}")))?;
        let key = environment::panorama_key(env, &node.panorama);
        let bytes = self.store.blob_get(&key).map_err(|e| {
            ApiError::not_found(format!(
                "panorama for node {:?} is unavailable (blob {key}): {e}",
                node.id
            ))
        })?;
        Ok((environment::image_content_type(&bytes), bytes))
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        if let Some(s) = self.sessions.lock().unwrap().get(id) {
            return Ok(s.clone());
        }
        let loaded: Session = self.store.get_doc(id).map_err(|e| match e {
            StoreError::NotFound { .. } | StoreError::BadKey(_) => {
                ApiError::not_found(format!("unknown session {id:?}"))
            }
            other => other.into(),
        })?;
        Ok(self
            .sessions
            .lock()
            .unwrap()
            .entry(id.to_owned())
            .or_insert_with(|| Arc::new(Mutex::new(loaded)))
            .clone())
    }

    /// Runs `f` with the session locked after checking `action` is legal,
    /// then applies the state change and persists the session if `f`
    /// succeeds.
    fn with_session<T>(
        &self,
        id: &str,
        action: Action,
        f: impl FnOnce(&mut Session) -> Result<T, ApiError>,
    ) -> Result<T, ApiError> {
        let handle = self.session(id)?;
        let mut session = handle.lock().unwrap();
        let next = session.permits(action).ok_or_else(|| {
            ApiError::conflict(
                "illegal_transition",
                format!(
                    "{action:?} is not allowed for a {:?} session in state {:?}",
                    session.kind, session.state
                ),
            )
        })?;
        let mut draft = session.clone();
        let out = f(&mut draft)?;
        draft.state = next;
        self.store.put_doc(&draft)?;
        *session = draft;
        Ok(out)
    }

    pub fn session_view(&self, id: &str) -> Result<SessionView, ApiError> {
        let handle = self.session(id)?;
        let s = handle.lock().unwrap();
        Ok(SessionView::from(&*s))
    }

    pub fn create_session(&self, worker_id: &str, kind: TaskKind) -> Result<SessionView, ApiError> {
        if worker_id.trim().is_empty() {
            return Err(ApiError::unprocessable("worker_id must not be empty"));
        }
        let task = self
            .store
            .claim_task(kind, worker_id, self.settings.lease_minutes)?
            .ok_or_else(|| {
                ApiError::conflict("no_tasks", format!("no {kind:?} tasks available"))
            })?;
        let id = self.ids.next_id("session");
        let mut session = Session::new(id.clone(), task, worker_id.to_owned(), self.store.now());
        if kind == TaskKind::Guide {
            session.audio_key = Some(format!("audio/{id}.wav"));
        }
        self.store.put_doc(&session)?;
        let view = SessionView::from(&session);
        self.sessions
            .lock()
            .unwrap()
            .insert(id, Arc::new(Mutex::new(session)));
        Ok(view)
    }

    /// Appends a batch of pose events. Batches carry consecutive sequence
    /// numbers starting at 1; a batch that was already applied is
    /// acknowledged again without effect, a batch that skips ahead is
    /// rejected naming the expected number. A batch is applied entirely or
    /// not at all.
    pub fn post_events(&self, id: &str, batch: EventBatch) -> Result<EventAck, ApiError> {
        {
            let handle = self.session(id)?;
            let s = handle.lock().unwrap();
            if batch.seq < s.next_event_seq {
                return Ok(EventAck {
                    accepted_through_seq: s.next_event_seq - 1,
                });
            }
        }
        let graph = {
            let env = self.session_view(id)?.task.environment_id;
            self.graph(&env)?
        };
        let received_at = self.store.now();
        self.with_session(id, Action::PostEvents, |s| {
            if batch.seq < s.next_event_seq {
                return Ok(EventAck {
                    accepted_through_seq: s.next_event_seq - 1,
                });
            }
            if batch.seq > s.next_event_seq {
                let mut err = ApiError::conflict(
                    "sequence_gap",
                    format!("expected seq {}, got {}", s.next_event_seq, batch.seq),
                );
                err.expected_seq = Some(s.next_event_seq);
                return Err(err);
            }
            let allowed: Option<Vec<&str>> = match (&s.task.payload, s.task.restrict_movement) {
                (TaskPayload::Guide { path }, true) => {
                    Some(path.nodes().iter().map(String::as_str).collect())
                }
                _ => None,
            };
            let start = s.task.start_node().unwrap_or_default().to_owned();
            let mut current = s.current_node.clone();
            let mut trace = s.trace.clone();
            for (i, pose) in batch.events.iter().enumerate() {
                let reject = |msg: String| ApiError::unprocessable(format!("event {i}: {msg}"));
                trace.check_next(pose).map_err(|e| reject(e.to_string()))?;
                if !graph.contains(&pose.node) {
                    return Err(reject(format!("unknown node {:?}", pose.node)));
                }
                if trace.is_empty() && pose.node != start {
                    return Err(reject(format!(
                        "first pose must be at start node {start:?}, not {:?}",
                        pose.node
                    )));
                }
                if pose.node != current && !graph.has_edge(&current, &pose.node) {
                    return Err(reject(format!(
                        "cannot move from {current:?} to non-neighbor {:?}",
                        pose.node
                    )));
                }
                if let Some(allowed) = &allowed {
                    if !allowed.contains(&pose.node.as_str()) {
                        return Err(reject(format!("node {:?} is off the task path", pose.node)));
                    }
                }
                current = pose.node.clone();
                trace.append_pose(pose.clone()).expect("checked above");
            }
            s.trace = trace;
            s.current_node = current;
            s.receipts.push(EventReceipt {
                seq: batch.seq,
                count: batch.events.len(),
                received_at,
            });
            s.next_event_seq += 1;
            Ok(EventAck {
                accepted_through_seq: batch.seq,
            })
        })
    }

    /// Guide recording controls: start, pause, resume, stop.
    pub fn transition(&self, id: &str, action: Action) -> Result<SessionView, ApiError> {
        if !matches!(
            action,
            Action::StartRecording | Action::Pause | Action::Resume | Action::StopRecording
        ) {
            return Err(ApiError::internal(format!(
                "{action:?} is not a plain transition"
            )));
        }
        self.with_session(id, action, |_| Ok(()))?;
        self.session_view(id)
    }

    pub fn set_transcript(&self, id: &str, text: &str) -> Result<SessionView, ApiError> {
        self.with_session(id, Action::SetTranscript, |s| {
            if align::tokenize(text).is_empty() {
                return Err(ApiError::unprocessable("transcript is empty"));
            }
            s.transcript = Some(text.to_owned());
            Ok(())
        })?;
        self.session_view(id)
    }

    pub fn upload_audio(&self, id: &str, chunk_index: u32, bytes: &[u8]) -> Result<(), ApiError> {
        // Chunk writes are serialized by the store per key, not per session,
        // so uploads can overlap event handling.
        let key = {
            let handle = self.session(id)?;
            let s = handle.lock().unwrap();
            if s.permits(Action::UploadAudio).is_none() {
                return Err(ApiError::conflict(
                    "illegal_transition",
                    format!("cannot upload audio in state {:?}", s.state),
                ));
            }
            s.audio_key
                .clone()
                .expect("guide sessions have an audio key")
        };
        self.store
            .blob_append(&key, chunk_index, bytes)
            .map_err(|e| match e {
                StoreError::DuplicateChunk { .. } => {
                    ApiError::conflict("duplicate_chunk", e.to_string())
                }
                StoreError::AlreadyFinalized(_) => {
                    ApiError::conflict("already_finalized", e.to_string())
                }
                other => other.into(),
            })
    }

    pub fn finalize_audio(&self, id: &str, total_chunks: u32) -> Result<BlobRef, ApiError> {
        self.with_session(id, Action::FinalizeAudio, |s| {
            let key = s
                .audio_key
                .clone()
                .expect("guide sessions have an audio key");
            let blob = self
                .store
                .blob_finalize(&key, total_chunks)
                .map_err(|e| match e {
                    StoreError::MissingChunk { .. } | StoreError::ExtraChunk { .. } => {
                        ApiError::unprocessable(e.to_string())
                    }
                    other => other.into(),
                })?;
            let audio = self.store.blob_get(&key)?;
            crate::wav::decode(&audio)
                .map_err(|e| ApiError::unprocessable(format!("uploaded audio: {e}")))?;
            s.audio = Some(blob.clone());
            Ok(blob)
        })
    }

    pub fn submit(&self, id: &str) -> Result<Completion, ApiError> {
        let annotation_id = self.ids.next_id("ann");
        let now = self.store.now();
        let doc = self.with_session(id, Action::Submit, |s| {
            let transcript = s.transcript.clone().unwrap_or_default();
            if align::tokenize(&transcript).is_empty() {
                return Err(ApiError::unprocessable("transcript is empty"));
            }
            let Some(audio) = &s.audio else {
                let mut err = ApiError::conflict(
                    "audio_not_finalized",
                    "audio upload has not been finalized yet",
                );
                err.retry_after_s = Some(1);
                return Err(err);
            };
            let TaskPayload::Guide { path } = &s.task.payload else {
                return Err(ApiError::internal("guide session without a guide task"));
            };
            let doc = AnnotationDoc {
                annotation_id: annotation_id.clone(),
                task_id: s.task.task_id.clone(),
                worker_id: s.worker_id.clone(),
                environment_id: s.task.environment_id.clone(),
                kind: TaskKind::Guide,
                path: path.clone(),
                audio_ref: Some(audio.key.clone()),
                transcript: Some(transcript),
                timed_transcript: None,
                pose_trace: s.trace.clone(),
                outcome: Outcome::Submitted,
                status: AnnotationStatus::Raw,
                instruction: None,
                reference_path: None,
                alignment_attempts: 0,
                alignment_note: None,
                created_at: now,
            };
            self.store.put_doc(&doc)?;
            s.annotation_id = Some(annotation_id.clone());
            Ok(doc)
        })?;

        self.store.complete_task(&doc.task_id)?;
        if self.settings.auto_follower_tasks {
            let start = doc.path.first().expect("non-empty path").to_owned();
            let task = TaskRecord::new_follower(
                self.ids.next_id("task"),
                doc.environment_id.clone(),
                start,
                Instruction::Audio {
                    annotation_id: doc.annotation_id.clone(),
                },
                None,
                now,
            );
            self.store.put_tasks(&[task])?;
        }
        if let Some(jobs) = &self.jobs {
            jobs.enqueue(doc.annotation_id.clone());
        }
        Ok(Completion {
            annotation_id: doc.annotation_id,
            state: SessionState::Completed,
            path: doc.path,
        })
    }

    fn instruction_of(&self, task: &TaskRecord) -> Result<InstructionBody, ApiError> {
        let TaskPayload::Follower { instruction, .. } = &task.payload else {
            return Err(ApiError::internal(
                "follower session without a follower task",
            ));
        };
        match instruction {
            Instruction::Text { text } => Ok(InstructionBody::Text(text.clone())),
            Instruction::Audio { annotation_id } => {
                let guide: AnnotationDoc = self.store.get_doc(annotation_id).map_err(|_| {
                    ApiError::not_found(format!(
                        "instruction annotation {annotation_id:?} not found"
                    ))
                })?;
                let key = guide.audio_ref.ok_or_else(|| {
                    ApiError::not_found(format!("annotation {annotation_id:?} has no audio"))
                })?;
                let bytes = self
                    .store
                    .blob_get(&key)
                    .map_err(|e| ApiError::not_found(format!("instruction audio {key}: {e}")))?;
                Ok(InstructionBody::Audio(bytes))
            }
        }
    }

    pub fn instruction(&self, id: &str) -> Result<InstructionBody, ApiError> {
        self.with_session(id, Action::GetInstruction, |s| self.instruction_of(&s.task))
    }

    pub fn waveform(&self, id: &str) -> Result<WaveformEnvelope, ApiError> {
        let bins = self.settings.waveform_bins;
        self.with_session(id, Action::GetWaveform, |s| {
            match self.instruction_of(&s.task)? {
                InstructionBody::Text(_) => Err(ApiError::not_found("instruction has no audio")),
                InstructionBody::Audio(bytes) => {
                    waveform::compute_waveform(&bytes, bins).map_err(|e| match e {
                        WaveformError::Wav(w) => ApiError::unprocessable(w.to_string()),
                        other => ApiError::internal(other.to_string()),
                    })
                }
            }
        })
    }

    fn reference_path(&self, task: &TaskRecord) -> Option<NavPath> {
        match &task.payload {
            TaskPayload::Follower {
                reference_path: Some(p),
                ..
            } => Some(p.clone()),
            TaskPayload::Follower {
                instruction: Instruction::Audio { annotation_id },
                ..
            } => self
                .store
                .get_doc::<AnnotationDoc>(annotation_id)
                .ok()
                .map(|d| d.path),
            _ => None,
        }
    }

    pub fn complete(&self, id: &str, outcome: Outcome) -> Result<Completion, ApiError> {
        if !matches!(outcome, Outcome::Done | Outcome::GaveUp) {
            return Err(ApiError::unprocessable("outcome must be done or gave_up"));
        }
        let annotation_id = self.ids.next_id("ann");
        let now = self.store.now();
        let doc = self.with_session(id, Action::Complete, |s| {
            let path = match s.trace.extract_path() {
                Ok(p) => p,
                Err(_) => NavPath::new([s.task.start_node().unwrap_or_default()]),
            };
            let TaskPayload::Follower { instruction, .. } = &s.task.payload else {
                return Err(ApiError::internal(
                    "follower session without a follower task",
                ));
            };
            let doc = AnnotationDoc {
                annotation_id: annotation_id.clone(),
                task_id: s.task.task_id.clone(),
                worker_id: s.worker_id.clone(),
                environment_id: s.task.environment_id.clone(),
                kind: TaskKind::Follower,
                path,
                audio_ref: None,
                transcript: None,
                timed_transcript: None,
                pose_trace: s.trace.clone(),
                outcome,
                status: AnnotationStatus::Raw,
                instruction: Some(instruction.clone()),
                reference_path: self.reference_path(&s.task),
                alignment_attempts: 0,
                alignment_note: None,
                created_at: now,
            };
            self.store.put_doc(&doc)?;
            s.annotation_id = Some(annotation_id.clone());
            Ok(doc)
        })?;
        self.store.complete_task(&doc.task_id)?;
        Ok(Completion {
            annotation_id: doc.annotation_id,
            state: SessionState::Completed,
            path: doc.path,
        })
    }

    fn evaluate_follower(&self, doc: &AnnotationDoc) -> Option<PathEval> {
        let reference = doc.reference_path.as_ref()?;
        let graph = self.graph(&doc.environment_id).ok()?;
        match metrics::evaluate(&graph, &doc.path, reference, &self.settings.eval) {
            Ok(e) => Some(e),
            Err(e) => {
                warn!(annotation = %doc.annotation_id, error = %e, "cannot evaluate follower path");
                None
            }
        }
    }

    /// Metrics over every follower annotation that has a reference path.
    pub fn dashboard_summary(
        &self,
        environment_id: Option<&str>,
    ) -> Result<MetricsReport, ApiError> {
        let docs = self.store.list_annotations(&AnnotationFilter {
            kind: Some(TaskKind::Follower),
            environment_id: environment_id.map(str::to_owned),
            ..Default::default()
        })?;
        let evals: Vec<(String, PathEval)> = docs
            .iter()
            .filter_map(|d| self.evaluate_follower(d).map(|e| (d.worker_id.clone(), e)))
            .collect();
        Ok(metrics::summarize(&evals))
    }

    pub fn replay(&self, annotation_id: &str) -> Result<Replay, ApiError> {
        let doc: AnnotationDoc = self.store.get_doc(annotation_id).map_err(|e| match e {
            StoreError::NotFound { .. } | StoreError::BadKey(_) => {
                ApiError::not_found(format!("unknown annotation {annotation_id:?}"))
            }
            other => other.into(),
        })?;
        let (timed, eval, sync) = match doc.kind {
            TaskKind::Guide => {
                let sync = doc
                    .timed_transcript
                    .as_ref()
                    .map(|t| align::synchronize(t.tokens(), &doc.pose_trace));
                (doc.timed_transcript.clone(), None, sync)
            }
            TaskKind::Follower => {
                let timed = match &doc.instruction {
                    Some(Instruction::Audio { annotation_id }) => self
                        .store
                        .get_doc::<AnnotationDoc>(annotation_id)
                        .ok()
                        .and_then(|g| g.timed_transcript),
                    _ => None,
                };
                (timed, self.evaluate_follower(&doc), None)
            }
        };
        Ok(Replay {
            annotation_id: doc.annotation_id,
            kind: doc.kind,
            status: doc.status,
            pose_trace: doc.pose_trace,
            timed_transcript: timed,
            path: doc.path,
            reference_path: doc.reference_path,
            eval,
            synchronization: sync,
        })
    }
}
