//! Annotation sessions and their state machines.
//!
//! Guide: `created → recording ⇄ paused → transcribing → completed`.
//! Follower: `navigating → completed`.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::store::{BlobRef, Document, TaskKind, TaskRecord};
use crate::trace::PoseTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Created,
    Recording,
    Paused,
    Transcribing,
    Navigating,
    Completed,
}

impl SessionState {
    pub const ALL: [SessionState; 6] = [
        SessionState::Created,
        SessionState::Recording,
        SessionState::Paused,
        SessionState::Transcribing,
        SessionState::Navigating,
        SessionState::Completed,
    ];
}

/// Everything a client can ask a session to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    StartRecording,
    Pause,
    Resume,
    StopRecording,
    SetTranscript,
    Submit,
    PostEvents,
    UploadAudio,
    FinalizeAudio,
    GetInstruction,
    GetWaveform,
    Complete,
}

impl Action {
    pub const ALL: [Action; 12] = [
        Action::StartRecording,
        Action::Pause,
        Action::Resume,
        Action::StopRecording,
        Action::SetTranscript,
        Action::Submit,
        Action::PostEvents,
        Action::UploadAudio,
        Action::FinalizeAudio,
        Action::GetInstruction,
        Action::GetWaveform,
        Action::Complete,
    ];
}

/// The state after `action`, or `None` if the action is illegal here.
pub fn transition(kind: TaskKind, state: SessionState, action: Action) -> Option<SessionState> {
    use Action::*;
    use SessionState::*;
    match (kind, state, action) {
        (TaskKind::Guide, Created, StartRecording) => Some(Recording),
        (TaskKind::Guide, Recording, Pause) => Some(Paused),
        (TaskKind::Guide, Paused, Resume) => Some(Recording),
        (TaskKind::Guide, Recording | Paused, StopRecording) => Some(Transcribing),
        (TaskKind::Guide, Recording, PostEvents) => Some(Recording),
        // Audio keeps uploading in the background while the guide transcribes.
        (TaskKind::Guide, Recording | Paused | Transcribing, UploadAudio | FinalizeAudio) => {
            Some(state)
        }
        (TaskKind::Guide, Transcribing, SetTranscript) => Some(Transcribing),
        (TaskKind::Guide, Transcribing, Submit) => Some(Completed),

        (TaskKind::Follower, Navigating, PostEvents | GetInstruction | GetWaveform) => {
            Some(Navigating)
        }
        (TaskKind::Follower, Navigating, Complete) => Some(Completed),
        _ => None,
    }
}

pub fn initial_state(kind: TaskKind) -> SessionState {
    match kind {
        TaskKind::Guide => SessionState::Created,
        TaskKind::Follower => SessionState::Navigating,
    }
}

/// Server-side bookkeeping for one accepted event batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventReceipt {
    pub seq: u64,
    pub count: usize,
    pub received_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub task: TaskRecord,
    pub worker_id: String,
    pub kind: TaskKind,
    pub state: SessionState,
    pub trace: PoseTrace,
    /// Sequence number the next event batch must carry.
    pub next_event_seq: u64,
    pub audio_key: Option<String>,
    pub audio: Option<BlobRef>,
    pub transcript: Option<String>,
    /// Where the annotator currently stands.
    pub current_node: String,
    pub receipts: Vec<EventReceipt>,
    pub annotation_id: Option<String>,
    pub started_at: DateTime<Utc>,
}

impl Document for Session {
    const COLLECTION: &'static str = "sessions";

    fn id(&self) -> &str {
        &self.session_id
    }
}

impl Session {
    pub fn new(
        session_id: String,
        task: TaskRecord,
        worker_id: String,
        started_at: DateTime<Utc>,
    ) -> Self {
        let kind = task.kind;
        let current_node = task.start_node().unwrap_or_default().to_owned();
        Session {
            trace: PoseTrace::new(session_id.clone()),
            session_id,
            task,
            worker_id,
            kind,
            state: initial_state(kind),
            next_event_seq: 1,
            audio_key: None,
            audio: None,
            transcript: None,
            current_node,
            receipts: Vec::new(),
            annotation_id: None,
            started_at,
        }
    }

    pub fn permits(&self, action: Action) -> Option<SessionState> {
        transition(self.kind, self.state, action)
    }
}
