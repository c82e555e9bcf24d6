//! Persistence for tasks, annotations, sessions and blobs.
//!
//! [`Store`] is the typed facade used by the rest of the crate. Storage
//! itself sits behind the [`Backend`] trait; [`LocalBackend`] keeps one
//! JSON file per document plus a blob tree on the local filesystem, and
//! [`MemoryBackend`] keeps everything in process.

mod local;
mod memory;

use std::io;
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{tokenize, TimedTranscript};
use crate::clock::{Clock, SystemClock};
use crate::navgraph::NavPath;
use crate::trace::PoseTrace;

pub use local::LocalBackend;
pub use memory::MemoryBackend;

pub const DEFAULT_LEASE_MINUTES: u32 = 60;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{collection}/{id} not found")]
    NotFound { collection: String, id: String },
    #[error("invalid document: {0}")]
    Invalid(String),
    #[error("invalid key {0:?}")]
    BadKey(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error("corrupt document {0}: {1}")]
    Corrupt(String, serde_json::Error),
    #[error("blob {key}: chunk {index} missing")]
    MissingChunk { key: String, index: u32 },
    #[error("blob {key}: chunk {index} already uploaded with different bytes")]
    DuplicateChunk { key: String, index: u32 },
    #[error("blob {key}: unexpected chunk {index} beyond total {total}")]
    ExtraChunk { key: String, index: u32, total: u32 },
    #[error("blob {0} is not finalized")]
    NotFinalized(String),
    #[error("blob {0} is already finalized")]
    AlreadyFinalized(String),
    #[error("lease must be at least one minute")]
    BadLease,
}

impl StoreError {
    pub(crate) fn io(context: impl Into<String>) -> impl FnOnce(io::Error) -> StoreError {
        let context = context.into();
        move |source| StoreError::Io { context, source }
    }

    pub fn is_not_found(&self) -> bool {
        matches!(self, StoreError::NotFound { .. })
    }
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Guide,
    Follower,
}

impl std::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "guide" => Ok(TaskKind::Guide),
            "follower" => Ok(TaskKind::Follower),
            other => Err(format!("unknown task kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Instruction {
    /// A guide annotation whose recording is played back.
    Audio {
        annotation_id: String,
    },
    Text {
        text: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskPayload {
    Guide {
        path: NavPath,
    },
    Follower {
        start_node: String,
        instruction: Instruction,
        /// Path to score against when the instruction is not a guide
        /// annotation (whose own path is used otherwise).
        #[serde(default)]
        reference_path: Option<NavPath>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Open,
    Claimed,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: String,
    pub kind: TaskKind,
    pub environment_id: String,
    pub payload: TaskPayload,
    /// Guides may only visit nodes on the task path.
    #[serde(default)]
    pub restrict_movement: bool,
    pub status: TaskStatus,
    pub claimed_by: Option<String>,
    pub lease_expiry: Option<DateTime<Utc>>,
    pub created_at: DateTime<Utc>,
}

impl TaskRecord {
    pub fn new_guide(
        task_id: impl Into<String>,
        environment_id: impl Into<String>,
        path: NavPath,
        restrict_movement: bool,
        created_at: DateTime<Utc>,
    ) -> Self {
        TaskRecord {
            task_id: task_id.into(),
            kind: TaskKind::Guide,
            environment_id: environment_id.into(),
            payload: TaskPayload::Guide { path },
            restrict_movement,
            status: TaskStatus::Open,
            claimed_by: None,
            lease_expiry: None,
            created_at,
        }
    }

    pub fn new_follower(
        task_id: impl Into<String>,
        environment_id: impl Into<String>,
        start_node: impl Into<String>,
        instruction: Instruction,
        reference_path: Option<NavPath>,
        created_at: DateTime<Utc>,
    ) -> Self {
        TaskRecord {
            task_id: task_id.into(),
            kind: TaskKind::Follower,
            environment_id: environment_id.into(),
            payload: TaskPayload::Follower {
                start_node: start_node.into(),
                instruction,
                reference_path,
            },
            restrict_movement: false,
            status: TaskStatus::Open,
            claimed_by: None,
            lease_expiry: None,
            created_at,
        }
    }

    /// Node the annotator starts at.
    pub fn start_node(&self) -> Option<&str> {
        match &self.payload {
            TaskPayload::Guide { path } => path.first(),
            TaskPayload::Follower { start_node, .. } => Some(start_node),
        }
    }

    pub fn is_claimable(&self, now: DateTime<Utc>) -> bool {
        match self.status {
            TaskStatus::Open => true,
            TaskStatus::Claimed => self.lease_expiry.is_some_and(|t| t <= now),
            TaskStatus::Completed => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Submitted,
    Done,
    GaveUp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationStatus {
    Raw,
    Aligned,
    Degraded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationDoc {
    pub annotation_id: String,
    pub task_id: String,
    pub worker_id: String,
    pub environment_id: String,
    pub kind: TaskKind,
    /// Guide: the annotated path. Follower: the path extracted from the trace.
    pub path: NavPath,
    pub audio_ref: Option<String>,
    pub transcript: Option<String>,
    pub timed_transcript: Option<TimedTranscript>,
    pub pose_trace: PoseTrace,
    pub outcome: Outcome,
    pub status: AnnotationStatus,
    /// Follower only: what was followed, and the path it is scored against.
    #[serde(default)]
    pub instruction: Option<Instruction>,
    #[serde(default)]
    pub reference_path: Option<NavPath>,
    #[serde(default)]
    pub alignment_attempts: u32,
    #[serde(default)]
    pub alignment_note: Option<String>,
    pub created_at: DateTime<Utc>,
}

/// A persisted document type.
pub trait Document: Serialize + DeserializeOwned {
    const COLLECTION: &'static str;

    fn id(&self) -> &str;

    fn validate(&self) -> std::result::Result<(), String> {
        Ok(())
    }
}

impl Document for TaskRecord {
    const COLLECTION: &'static str = "tasks";

    fn id(&self) -> &str {
        &self.task_id
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.status == TaskStatus::Claimed
            && (self.claimed_by.is_none() || self.lease_expiry.is_none())
        {
            return Err(format!(
                "task {} is claimed without a worker and lease",
                self.task_id
            ));
        }
        let kind_matches = matches!(
            (&self.kind, &self.payload),
            (TaskKind::Guide, TaskPayload::Guide { .. })
                | (TaskKind::Follower, TaskPayload::Follower { .. })
        );
        if !kind_matches {
            return Err(format!(
                "task {} payload does not match its kind",
                self.task_id
            ));
        }
        if let TaskPayload::Guide { path } = &self.payload {
            if path.is_empty() {
                return Err(format!("task {} has an empty path", self.task_id));
            }
        }
        Ok(())
    }
}

impl Document for AnnotationDoc {
    const COLLECTION: &'static str = "annotations";

    fn id(&self) -> &str {
        &self.annotation_id
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let id = &self.annotation_id;
        if self.path.is_empty() {
            return Err(format!("annotation {id} has an empty path"));
        }
        match self.kind {
            TaskKind::Guide => {
                if self.audio_ref.is_none() || self.transcript.is_none() {
                    return Err(format!("guide annotation {id} needs audio and transcript"));
                }
            }
            TaskKind::Follower => {
                if !matches!(self.outcome, Outcome::Done | Outcome::GaveUp) {
                    return Err(format!(
                        "follower annotation {id} needs outcome done or gave_up"
                    ));
                }
            }
        }
        if self.status != AnnotationStatus::Raw {
            let expected = tokenize(self.transcript.as_deref().unwrap_or("")).len();
            match &self.timed_transcript {
                Some(t) if t.len() == expected => {}
                Some(t) => {
                    return Err(format!(
                        "annotation {id} has {} timed tokens for {expected} transcript tokens",
                        t.len()
                    ))
                }
                None => {
                    return Err(format!(
                        "annotation {id} is aligned without a timed transcript"
                    ))
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationFilter {
    pub kind: Option<TaskKind>,
    pub status: Option<AnnotationStatus>,
    pub worker_id: Option<String>,
    pub environment_id: Option<String>,
}

impl AnnotationFilter {
    pub fn matches(&self, doc: &AnnotationDoc) -> bool {
        self.kind.is_none_or(|k| k == doc.kind)
            && self.status.is_none_or(|s| s == doc.status)
            && self.worker_id.as_ref().is_none_or(|w| *w == doc.worker_id)
            && self
                .environment_id
                .as_ref()
                .is_none_or(|e| *e == doc.environment_id)
    }
}

/// A finalized blob.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobRef {
    pub key: String,
    pub size_bytes: u64,
    /// Lowercase hex SHA-256.
    pub content_hash: String,
}

/// Raw storage operations. Documents are opaque bytes grouped into
/// collections; blobs are byte strings assembled from indexed chunks.
pub trait Backend: Send + Sync {
    /// Durable once this returns.
    fn put_raw(&self, collection: &str, id: &str, bytes: &[u8]) -> Result<()>;
    fn get_raw(&self, collection: &str, id: &str) -> Result<Vec<u8>>;
    /// All documents in a collection, ordered by id.
    fn list_raw(&self, collection: &str) -> Result<Vec<(String, Vec<u8>)>>;
    /// Runs `f` while holding an exclusive lock over `collection` shared by
    /// every user of the same storage.
    fn locked(&self, collection: &str, f: &mut dyn FnMut() -> Result<()>) -> Result<()>;

    /// Stores chunk `index` of `key`. Re-sending identical bytes is a no-op.
    fn put_chunk(&self, key: &str, index: u32, bytes: &[u8]) -> Result<()>;
    /// Concatenates chunks `0..total` in index order. Finalizing an already
    /// finalized blob returns its existing reference.
    fn finalize_blob(&self, key: &str, total: u32) -> Result<BlobRef>;
    fn put_blob(&self, key: &str, bytes: &[u8]) -> Result<BlobRef>;
    fn get_blob(&self, key: &str) -> Result<Vec<u8>>;
    /// `None` if the blob does not exist or is not finalized.
    fn blob_ref(&self, key: &str) -> Result<Option<BlobRef>>;
}

pub(crate) fn check_key(key: &str) -> Result<()> {
    let ok = !key.is_empty()
        && key.split('/').all(|seg| {
            !seg.is_empty()
                && seg != "."
                && seg != ".."
                && !seg.starts_with('.')
                && seg
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
        });
    if ok {
        Ok(())
    } else {
        Err(StoreError::BadKey(key.to_owned()))
    }
}

pub(crate) fn digest(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

/// Typed access to a backend.
#[derive(Clone)]
pub struct Store {
    backend: Arc<dyn Backend>,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").finish_non_exhaustive()
    }
}

impl Store {
    pub fn new(backend: Arc<dyn Backend>, clock: Arc<dyn Clock>) -> Self {
        Store { backend, clock }
    }

    pub fn local(data_dir: impl Into<std::path::PathBuf>) -> Result<Self> {
        Ok(Self::new(
            Arc::new(LocalBackend::open(data_dir)?),
            Arc::new(SystemClock),
        ))
    }

    pub fn in_memory() -> Self {
        Self::new(Arc::new(MemoryBackend::default()), Arc::new(SystemClock))
    }

    pub fn backend(&self) -> &dyn Backend {
        self.backend.as_ref()
    }

    pub fn clock(&self) -> &dyn Clock {
        self.clock.as_ref()
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    pub fn put_doc<D: Document>(&self, doc: &D) -> Result<String> {
        doc.validate().map_err(StoreError::Invalid)?;
        let bytes = serde_json::to_vec_pretty(doc).expect("documents serialize");
        self.backend.put_raw(D::COLLECTION, doc.id(), &bytes)?;
        Ok(doc.id().to_owned())
    }

    pub fn get_doc<D: Document>(&self, id: &str) -> Result<D> {
        let bytes = self.backend.get_raw(D::COLLECTION, id)?;
        serde_json::from_slice(&bytes)
            .map_err(|e| StoreError::Corrupt(format!("{}/{id}", D::COLLECTION), e))
    }

    pub fn list_docs<D: Document>(&self) -> Result<Vec<D>> {
        self.backend
            .list_raw(D::COLLECTION)?
            .into_iter()
            .map(|(id, bytes)| {
                serde_json::from_slice(&bytes)
                    .map_err(|e| StoreError::Corrupt(format!("{}/{id}", D::COLLECTION), e))
            })
            .collect()
    }

    pub fn list_annotations(&self, filter: &AnnotationFilter) -> Result<Vec<AnnotationDoc>> {
        Ok(self
            .list_docs::<AnnotationDoc>()?
            .into_iter()
            .filter(|d| filter.matches(d))
            .collect())
    }

    /// Writes tasks while holding the task lock, so seeding never races a claim.
    pub fn put_tasks(&self, tasks: &[TaskRecord]) -> Result<()> {
        for t in tasks {
            t.validate().map_err(StoreError::Invalid)?;
        }
        self.backend.locked(TaskRecord::COLLECTION, &mut || {
            for t in tasks {
                self.put_doc(t)?;
            }
            Ok(())
        })
    }

    /// Atomically claims the oldest claimable task of `kind`: an open task or
    /// one whose lease has expired.
    pub fn claim_task(
        &self,
        kind: TaskKind,
        worker_id: &str,
        lease_minutes: u32,
    ) -> Result<Option<TaskRecord>> {
        if lease_minutes == 0 {
            return Err(StoreError::BadLease);
        }
        let mut claimed = None;
        self.backend.locked(TaskRecord::COLLECTION, &mut || {
            let now = self.clock.now();
            let mut tasks: Vec<TaskRecord> = self
                .list_docs::<TaskRecord>()?
                .into_iter()
                .filter(|t| t.kind == kind && t.is_claimable(now))
                .collect();
            tasks.sort_by(|a, b| (a.created_at, &a.task_id).cmp(&(b.created_at, &b.task_id)));
            if let Some(mut task) = tasks.into_iter().next() {
                task.status = TaskStatus::Claimed;
                task.claimed_by = Some(worker_id.to_owned());
                task.lease_expiry = Some(now + Duration::minutes(i64::from(lease_minutes)));
                self.put_doc(&task)?;
                claimed = Some(task);
            }
            Ok(())
        })?;
        Ok(claimed)
    }

    /// Marks a task completed. Completed tasks never reopen.
    pub fn complete_task(&self, task_id: &str) -> Result<TaskRecord> {
        let mut out = None;
        self.backend.locked(TaskRecord::COLLECTION, &mut || {
            let mut task: TaskRecord = self.get_doc(task_id)?;
            task.status = TaskStatus::Completed;
            self.put_doc(&task)?;
            out = Some(task);
            Ok(())
        })?;
        Ok(out.expect("set inside lock"))
    }

    pub fn blob_append(&self, key: &str, chunk_index: u32, bytes: &[u8]) -> Result<()> {
        check_key(key)?;
        self.backend.put_chunk(key, chunk_index, bytes)
    }

    pub fn blob_finalize(&self, key: &str, total_chunks: u32) -> Result<BlobRef> {
        check_key(key)?;
        self.backend.finalize_blob(key, total_chunks)
    }

    pub fn blob_get(&self, key: &str) -> Result<Vec<u8>> {
        check_key(key)?;
        self.backend.get_blob(key)
    }

    pub fn blob_put(&self, key: &str, bytes: &[u8]) -> Result<BlobRef> {
        check_key(key)?;
        self.backend.put_blob(key, bytes)
    }

    pub fn blob_ref(&self, key: &str) -> Result<Option<BlobRef>> {
        check_key(key)?;
        self.backend.blob_ref(key)
    }
}
