//! Background alignment of submitted guide annotations.

use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use crossbeam_channel::{unbounded, Sender};
use thiserror::Error;
use tracing::{info, warn};

use crate::align::{self, tokenize, AlignError, AutomaticTranscriber, TimedTranscript};
use crate::store::{
    AnnotationDoc, AnnotationFilter, AnnotationStatus, Store, StoreError, TaskKind,
};
use crate::wav;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    /// Delay before retry `n` is `base_backoff * 2^n`.
    pub base_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_backoff: Duration::from_millis(500),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobOutcome {
    Aligned,
    Degraded,
    /// Not a raw guide annotation; nothing to do.
    Skipped,
}

#[derive(Debug, Error)]
pub enum JobError {
    #[error(transparent)]
    Store(#[from] StoreError),
}

fn degrade(doc: &mut AnnotationDoc, audio: Option<&[u8]>, note: String) {
    let manual = tokenize(doc.transcript.as_deref().unwrap_or(""));
    let duration = audio
        .and_then(|a| wav::decode(a).ok())
        .map(|p| p.duration_ms())
        .unwrap_or(0);
    doc.timed_transcript = Some(TimedTranscript(align::uniform_spread(&manual, duration)));
    doc.status = AnnotationStatus::Degraded;
    doc.alignment_note = Some(note);
}

/// Aligns one raw guide annotation. Transient recognizer failures are
/// retried with exponential backoff; when retries run out, or on any
/// permanent failure, the transcript is spread uniformly over the audio and
/// the annotation is marked degraded. Already processed annotations are left
/// untouched.
pub fn run_alignment_job(
    store: &Store,
    asr: &dyn AutomaticTranscriber,
    annotation_id: &str,
    policy: &RetryPolicy,
) -> Result<JobOutcome, JobError> {
    let mut doc: AnnotationDoc = store.get_doc(annotation_id)?;
    if doc.kind != TaskKind::Guide || doc.status != AnnotationStatus::Raw {
        return Ok(JobOutcome::Skipped);
    }
    let transcript = doc.transcript.clone().unwrap_or_default();
    let audio = match doc.audio_ref.as_deref().map(|k| store.blob_get(k)) {
        Some(Ok(bytes)) => bytes,
        Some(Err(e)) => {
            degrade(&mut doc, None, format!("audio unavailable: {e}"));
            store.put_doc(&doc)?;
            return Ok(JobOutcome::Degraded);
        }
        None => {
            degrade(&mut doc, None, "no audio recorded".into());
            store.put_doc(&doc)?;
            return Ok(JobOutcome::Degraded);
        }
    };

    let mut attempt = 0;
    loop {
        doc.alignment_attempts += 1;
        match align::align_transcript(&audio, &transcript, asr) {
            Ok(aligned) => {
                doc.timed_transcript = Some(aligned.tokens);
                if aligned.degraded {
                    doc.status = AnnotationStatus::Degraded;
                    doc.alignment_note = Some("recognizer returned no words".into());
                } else {
                    doc.status = AnnotationStatus::Aligned;
                    doc.alignment_note = None;
                }
                store.put_doc(&doc)?;
                info!(annotation = annotation_id, status = ?doc.status, "alignment finished");
                return Ok(if aligned.degraded {
                    JobOutcome::Degraded
                } else {
                    JobOutcome::Aligned
                });
            }
            Err(AlignError::Asr(e)) if e.is_transient() && attempt < policy.max_retries => {
                warn!(annotation = annotation_id, attempt, error = %e, "recognizer failed; retrying");
                doc.alignment_note = Some(format!("attempt {}: {e}", doc.alignment_attempts));
                store.put_doc(&doc)?;
                std::thread::sleep(policy.base_backoff * 2u32.pow(attempt));
                attempt += 1;
            }
            Err(e) => {
                warn!(annotation = annotation_id, error = %e, "alignment failed; degrading");
                degrade(&mut doc, Some(&audio), e.to_string());
                store.put_doc(&doc)?;
                return Ok(JobOutcome::Degraded);
            }
        }
    }
}

#[derive(Debug, Default)]
struct Pending {
    count: Mutex<usize>,
    idle: Condvar,
}

/// Fixed pool of threads draining an alignment queue.
pub struct AlignmentWorkers {
    sender: Option<Sender<String>>,
    handles: Vec<JoinHandle<()>>,
    pending: Arc<Pending>,
}

pub const DEFAULT_WORKERS: usize = 2;

impl AlignmentWorkers {
    pub fn start(
        store: Store,
        asr: Arc<dyn AutomaticTranscriber>,
        policy: RetryPolicy,
        workers: usize,
    ) -> Self {
        let (sender, receiver) = unbounded::<String>();
        let pending = Arc::new(Pending::default());
        let handles = (0..workers.max(1))
            .map(|n| {
                let receiver = receiver.clone();
                let store = store.clone();
                let asr = asr.clone();
                let pending = pending.clone();
                std::thread::Builder::new()
                    .name(format!("align-{n}"))
                    .spawn(move || {
                        for id in receiver {
                            if let Err(e) = run_alignment_job(&store, asr.as_ref(), &id, &policy) {
                                warn!(annotation = %id, error = %e, "alignment job error");
                            }
                            let mut count = pending.count.lock().unwrap();
                            *count -= 1;
                            if *count == 0 {
                                pending.idle.notify_all();
                            }
                        }
                    })
                    .expect("spawn alignment worker")
            })
            .collect();
        AlignmentWorkers {
            sender: Some(sender),
            handles,
            pending,
        }
    }

    pub fn enqueue(&self, annotation_id: impl Into<String>) {
        *self.pending.count.lock().unwrap() += 1;
        self.sender
            .as_ref()
            .expect("running")
            .send(annotation_id.into())
            .expect("workers alive");
    }

    /// Queues every raw guide annotation in the store.
    pub fn enqueue_raw(&self, store: &Store) -> Result<usize, StoreError> {
        let raw = store.list_annotations(&AnnotationFilter {
            kind: Some(TaskKind::Guide),
            status: Some(AnnotationStatus::Raw),
            ..Default::default()
        })?;
        for doc in &raw {
            self.enqueue(doc.annotation_id.clone());
        }
        Ok(raw.len())
    }

    /// Blocks until the queue is drained.
    pub fn wait_idle(&self) {
        let mut count = self.pending.count.lock().unwrap();
        while *count > 0 {
            count = self.pending.idle.wait(count).unwrap();
        }
    }
}

impl Drop for AlignmentWorkers {
    fn drop(&mut self) {
        self.sender.take();
        for h in self.handles.drain(..) {
            let _ = h.join();
        }
    }
}
