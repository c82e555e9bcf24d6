//! Blocking REST client for scripted annotators, load tests and tooling.

use std::time::{Duration, Instant};

use reqwest::blocking::{Client as Http, RequestBuilder, Response};
use reqwest::header::{CONTENT_TYPE, RETRY_AFTER};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::metrics::MetricsReport;
use crate::server::http::{
    ChunkAck, CompleteBody, CreateSession, FinalizeBody, TextInstruction, TranscriptBody,
};
use crate::server::{
    ApiError, ClientConfig, Completion, EventAck, EventBatch, InstructionBody, Replay, SessionView,
};
use crate::store::{BlobRef, Outcome, TaskKind};
use crate::trace::Pose;
use crate::waveform::WaveformEnvelope;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("server said {0}")]
    Api(ApiError),
}

impl ClientError {
    /// The server's error, if the request got that far.
    pub fn api(&self) -> Option<&ApiError> {
        match self {
            ClientError::Api(e) => Some(e),
            ClientError::Transport(_) => None,
        }
    }

    pub fn status(&self) -> Option<u16> {
        self.api().map(|e| e.status)
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: Http,
}

fn check(res: Response) -> Result<Response> {
    if res.status().is_success() {
        return Ok(res);
    }
    let status = res.status().as_u16();
    let retry_after = res
        .headers()
        .get(RETRY_AFTER)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse().ok());
    let text = res.text().unwrap_or_default();
    let mut err = serde_json::from_str::<ApiError>(&text).unwrap_or(ApiError {
        status,
        error: "http".into(),
        message: text,
        expected_seq: None,
        retry_after_s: None,
    });
    err.status = status;
    err.retry_after_s = err.retry_after_s.or(retry_after);
    Err(ClientError::Api(err))
}

impl Client {
    /// `base` is the server root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Client {
            base: base.into().trim_end_matches('/').to_owned(),
            http: Http::new(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn send(&self, req: RequestBuilder) -> Result<Response> {
        check(req.send()?)
    }

    fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        Ok(self.send(self.http.get(self.url(path)))?.json()?)
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        Ok(self
            .send(self.http.post(self.url(path)).json(body))?
            .json()?)
    }

    fn post_empty<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        Ok(self.send(self.http.post(self.url(path)))?.json()?)
    }

    fn bytes(&self, path: &str) -> Result<(String, Vec<u8>)> {
        let res = self.send(self.http.get(self.url(path)))?;
        let ct = res
            .headers()
            .get(CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .unwrap_or_default()
            .to_owned();
        Ok((ct, res.bytes()?.to_vec()))
    }

    pub fn config(&self, session_id: Option<&str>) -> Result<ClientConfig> {
        match session_id {
            Some(id) => self.get(&format!("/api/config?session={id}")),
            None => self.get("/api/config"),
        }
    }

    /// The stored graph document, byte for byte.
    pub fn graph(&self, env: &str) -> Result<Vec<u8>> {
        Ok(self.bytes(&format!("/api/environments/{env}/graph"))?.1)
    }

    /// Content type and image bytes.
    pub fn panorama(&self, env: &str, node: &str) -> Result<(String, Vec<u8>)> {
        self.bytes(&format!("/api/environments/{env}/pano/{node}"))
    }

    pub fn create_session(&self, worker_id: &str, kind: TaskKind) -> Result<SessionView> {
        self.post(
            "/api/sessions",
            &CreateSession {
                worker_id: Some(worker_id.to_owned()),
                kind,
            },
        )
    }

    pub fn session(&self, id: &str) -> Result<SessionView> {
        self.get(&format!("/api/sessions/{id}"))
    }

    pub fn post_events(&self, id: &str, seq: u64, events: &[Pose]) -> Result<EventAck> {
        self.post(
            &format!("/api/sessions/{id}/events"),
            &EventBatch {
                seq,
                events: events.to_vec(),
            },
        )
    }

    pub fn start_recording(&self, id: &str) -> Result<SessionView> {
        self.post_empty(&format!("/api/sessions/{id}/start-recording"))
    }

    pub fn pause(&self, id: &str) -> Result<SessionView> {
        self.post_empty(&format!("/api/sessions/{id}/pause"))
    }

    pub fn resume(&self, id: &str) -> Result<SessionView> {
        self.post_empty(&format!("/api/sessions/{id}/resume"))
    }

    pub fn stop_recording(&self, id: &str) -> Result<SessionView> {
        self.post_empty(&format!("/api/sessions/{id}/stop-recording"))
    }

    pub fn set_transcript(&self, id: &str, text: &str) -> Result<SessionView> {
        self.post(
            &format!("/api/sessions/{id}/transcript"),
            &TranscriptBody { text: text.into() },
        )
    }

    pub fn upload_chunk(&self, id: &str, chunk_index: u32, bytes: &[u8]) -> Result<ChunkAck> {
        let req = self
            .http
            .put(self.url(&format!("/api/sessions/{id}/audio/{chunk_index}")))
            .header(CONTENT_TYPE, "application/octet-stream")
            .body(bytes.to_vec());
        Ok(self.send(req)?.json()?)
    }

    /// Uploads `audio` in `chunk_size` pieces and finalizes it.
    pub fn upload_audio(&self, id: &str, audio: &[u8], chunk_size: usize) -> Result<BlobRef> {
        let chunks: Vec<&[u8]> = audio.chunks(chunk_size.max(1)).collect();
        for (i, chunk) in chunks.iter().enumerate() {
            self.upload_chunk(id, i as u32, chunk)?;
        }
        self.finalize_audio(id, chunks.len() as u32)
    }

    pub fn finalize_audio(&self, id: &str, total_chunks: u32) -> Result<BlobRef> {
        self.post(
            &format!("/api/sessions/{id}/audio/finalize"),
            &FinalizeBody { total_chunks },
        )
    }

    pub fn submit(&self, id: &str) -> Result<Completion> {
        self.post_empty(&format!("/api/sessions/{id}/submit"))
    }

    /// Submits, waiting out "audio not finalized" responses for at most
    /// `patience`.
    pub fn submit_when_ready(&self, id: &str, patience: Duration) -> Result<Completion> {
        let deadline = Instant::now() + patience;
        loop {
            match self.submit(id) {
                Err(ClientError::Api(e))
                    if e.error == "audio_not_finalized" && Instant::now() < deadline =>
                {
                    let wait = Duration::from_secs(e.retry_after_s.unwrap_or(1));
                    std::thread::sleep(
                        wait.min(deadline.saturating_duration_since(Instant::now())),
                    );
                }
                other => return other,
            }
        }
    }

    pub fn instruction(&self, id: &str) -> Result<InstructionBody> {
        let (ct, bytes) = self.bytes(&format!("/api/sessions/{id}/instruction"))?;
        if ct.starts_with("audio/") {
            return Ok(InstructionBody::Audio(bytes));
        }
        let text: TextInstruction = serde_json::from_slice(&bytes).map_err(|e| {
            ClientError::Api(ApiError {
                status: 200,
                error: "decode".into(),
                message: e.to_string(),
                expected_seq: None,
                retry_after_s: None,
            })
        })?;
        Ok(InstructionBody::Text(text.text))
    }

    pub fn waveform(&self, id: &str) -> Result<WaveformEnvelope> {
        self.get(&format!("/api/sessions/{id}/waveform"))
    }

    pub fn complete(&self, id: &str, outcome: Outcome) -> Result<Completion> {
        self.post(
            &format!("/api/sessions/{id}/complete"),
            &CompleteBody { outcome },
        )
    }

    pub fn dashboard(&self, environment_id: Option<&str>) -> Result<MetricsReport> {
        match environment_id {
            Some(env) => self.get(&format!("/api/dashboard/summary?env={env}")),
            None => self.get("/api/dashboard/summary"),
        }
    }

    pub fn replay(&self, annotation_id: &str) -> Result<Replay> {
        self.get(&format!("/api/annotations/{annotation_id}/replay"))
    }
}
