//! Automatic speech recognition backends.
//!
//! The pipeline only needs word-level timestamps. Two implementations:
//! an HTTP client for an external recognizer, and an offline mock driven
//! by JSONL fixtures.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{normalize_word, TimedToken, Token};
use crate::wav;

#[derive(Debug, Error)]
pub enum AsrError {
    /// Network or server-side failure; worth retrying.
    #[error("transport: {0}")]
    Transport(String),
    #[error("request rejected with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("fixture {path}: {reason}")]
    Fixture { path: PathBuf, reason: String },
}

impl AsrError {
    pub fn is_transient(&self) -> bool {
        matches!(self, AsrError::Transport(_))
    }
}

/// One recognized word as exchanged with recognizers and fixture files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsrWord {
    pub word: String,
    pub start_ms: u64,
    pub end_ms: u64,
}

pub trait AutomaticTranscriber: Send + Sync {
    /// Word-level transcription of a WAV recording. Returned tokens are
    /// normalized, indexed from 0 and ordered by start time.
    fn transcribe(&self, audio: &[u8]) -> Result<Vec<TimedToken>, AsrError>;
}

/// Normalizes recognizer words into timed tokens, dropping words that
/// normalize to nothing.
pub fn tokens_from_words(mut words: Vec<AsrWord>) -> Result<Vec<TimedToken>, AsrError> {
    if let Some(w) = words.iter().find(|w| w.end_ms < w.start_ms) {
        return Err(AsrError::Malformed(format!(
            "word {:?} ends at {} ms before it starts at {} ms",
            w.word, w.end_ms, w.start_ms
        )));
    }
    words.sort_by_key(|w| w.start_ms);
    Ok(words
        .into_iter()
        .filter_map(|w| normalize_word(&w.word).map(|text| (text, w)))
        .enumerate()
        .map(|(index, (text, w))| {
            TimedToken::new(
                Token {
                    text,
                    original: w.word,
                    index,
                },
                w.start_ms,
                w.end_ms,
            )
        })
        .collect())
}

pub fn parse_words_jsonl(text: &str) -> Result<Vec<AsrWord>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

pub fn words_to_jsonl(words: &[AsrWord]) -> String {
    words
        .iter()
        .map(|w| serde_json::to_string(w).expect("serializable") + "\n")
        .collect()
}

fn read_fixture(path: &Path) -> Result<Vec<AsrWord>, AsrError> {
    let fixture_err = |reason: String| AsrError::Fixture {
        path: path.to_owned(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| fixture_err(e.to_string()))?;
    parse_words_jsonl(&text).map_err(|e| fixture_err(e.to_string()))
}

pub fn audio_digest(audio: &[u8]) -> String {
    hex::encode(Sha256::digest(audio))
}

#[derive(Debug)]
enum MockSource {
    Fixed(Vec<AsrWord>),
    /// `{sha256(audio)}.jsonl`, falling back to `default.jsonl`; no match
    /// means an empty transcription.
    Dir(PathBuf),
    Failing,
}

/// Deterministic offline recognizer for tests and demos.
#[derive(Debug)]
pub struct MockTranscriber {
    source: MockSource,
    calls: AtomicUsize,
}

impl MockTranscriber {
    fn with(source: MockSource) -> Self {
        MockTranscriber {
            source,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn from_words(words: Vec<AsrWord>) -> Self {
        Self::with(MockSource::Fixed(words))
    }

    pub fn from_jsonl_file(path: &Path) -> Result<Self, AsrError> {
        read_fixture(path).map(Self::from_words)
    }

    pub fn fixture_dir(dir: impl Into<PathBuf>) -> Self {
        Self::with(MockSource::Dir(dir.into()))
    }

    /// Always fails with a transient transport error.
    pub fn failing() -> Self {
        Self::with(MockSource::Failing)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl AutomaticTranscriber for MockTranscriber {
    fn transcribe(&self, audio: &[u8]) -> Result<Vec<TimedToken>, AsrError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        match &self.source {
            MockSource::Fixed(words) => tokens_from_words(words.clone()),
            MockSource::Failing => Err(AsrError::Transport("mock recognizer is down".into())),
            MockSource::Dir(dir) => {
                let keyed = dir.join(format!("{}.jsonl", audio_digest(audio)));
                let fallback = dir.join("default.jsonl");
                for path in [keyed, fallback] {
                    if path.is_file() {
                        return tokens_from_words(read_fixture(&path)?);
                    }
                }
                Ok(Vec::new())
            }
        }
    }
}

/// Counting semaphore bounding in-flight recognizer requests.
#[derive(Debug)]
struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Permits {
    fn acquire(&self) -> PermitGuard<'_> {
        let mut free = self.free.lock().expect("permit lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("permit lock");
        }
        *free -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("permit lock") += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug, Deserialize)]
struct AsrResponse {
    words: Vec<AsrWord>,
}

/// Client for an HTTP recognizer.
///
/// POSTs the WAV bytes to `endpoint` with `Content-Type: audio/wav` and an
/// `X-Sample-Rate-Hz` header (plus `Authorization: Bearer <token>` when
/// configured). Expects `{"words": [{"word", "start_ms", "end_ms"}, ...]}`.
#[derive(Debug)]
pub struct HttpTranscriber {
    endpoint: String,
    token: Option<String>,
    client: reqwest::blocking::Client,
    permits: Permits,
}

pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

impl HttpTranscriber {
    pub fn new(endpoint: impl Into<String>, token: Option<String>, max_in_flight: usize) -> Self {
        HttpTranscriber {
            endpoint: endpoint.into(),
            token,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("http client"),
            permits: Permits {
                free: Mutex::new(max_in_flight.max(1)),
                cv: Condvar::new(),
            },
        }
    }
}

impl AutomaticTranscriber for HttpTranscriber {
    fn transcribe(&self, audio: &[u8]) -> Result<Vec<TimedToken>, AsrError> {
        let rate = wav::sample_rate(audio).unwrap_or(wav::DEFAULT_SAMPLE_RATE);
        let _permit = self.permits.acquire();
        let mut req = self
            .client
            .post(&self.endpoint)
            .header("content-type", "audio/wav")
            .header("x-sample-rate-hz", rate.to_string())
            .body(audio.to_vec());
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| AsrError::Transport(e.to_string()))?;
        let status = resp.status();
        let body = resp
            .text()
            .map_err(|e| AsrError::Transport(e.to_string()))?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(AsrError::Transport(format!("status {status}: {body}")));
        }
        if !status.is_success() {
            return Err(AsrError::Rejected {
                status: status.as_u16(),
                body,
            });
        }
        let parsed: AsrResponse =
            serde_json::from_str(&body).map_err(|e| AsrError::Malformed(e.to_string()))?;
        tokens_from_words(parsed.words)
    }
}
