//! Transcript alignment.
//!
//! A noisy but timestamped automatic transcription is aligned to the
//! annotator's manual transcription with DTW over tokens, and the
//! automatic timestamps are carried over to the manual tokens. The timed
//! manual tokens can then be synchronized with a pose trace.

pub mod asr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dtw;
use crate::trace::PoseTrace;
use crate::wav;

pub use asr::{
    AsrError, AsrWord, AutomaticTranscriber, HttpTranscriber, MockTranscriber,
    DEFAULT_MAX_IN_FLIGHT,
};

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("automatic transcript is empty")]
    EmptyAuto,
    #[error("manual transcript has no tokens")]
    EmptyManual,
    #[error("alignment path does not fit sequences of length {auto} and {manual}")]
    InvalidPath { auto: usize, manual: usize },
    #[error("speech recognition failed: {0}")]
    Asr(#[from] AsrError),
    #[error("cannot read audio duration: {0}")]
    Audio(#[from] wav::WavError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// Normalized form used for matching.
    pub text: String,
    /// The whitespace-delimited source string.
    pub original: String,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "TimedTokenRecord", from = "TimedTokenRecord")]
pub struct TimedToken {
    pub token: Token,
    pub start_ms: u64,
    pub end_ms: u64,
}

/// Export row: `{"token", "original", "start_ms", "end_ms"}`.
#[derive(Serialize, Deserialize)]
struct TimedTokenRecord {
    token: String,
    original: String,
    start_ms: u64,
    end_ms: u64,
}

impl From<TimedToken> for TimedTokenRecord {
    fn from(t: TimedToken) -> Self {
        TimedTokenRecord {
            token: t.token.text,
            original: t.token.original,
            start_ms: t.start_ms,
            end_ms: t.end_ms,
        }
    }
}

// Index is positional; `TimedTranscript` restores it after deserializing.
impl From<TimedTokenRecord> for TimedToken {
    fn from(r: TimedTokenRecord) -> Self {
        TimedToken {
            token: Token {
                text: r.token,
                original: r.original,
                index: 0,
            },
            start_ms: r.start_ms,
            end_ms: r.end_ms,
        }
    }
}

impl TimedToken {
    pub fn new(token: Token, start_ms: u64, end_ms: u64) -> Self {
        TimedToken {
            token,
            start_ms,
            end_ms,
        }
    }

    pub fn text(&self) -> &str {
        &self.token.text
    }
}

/// An ordered timed token sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct TimedTranscript(pub Vec<TimedToken>);

impl<'de> Deserialize<'de> for TimedTranscript {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let mut tokens = Vec::<TimedToken>::deserialize(d)?;
        for (i, t) in tokens.iter_mut().enumerate() {
            t.token.index = i;
        }
        Ok(TimedTranscript(tokens))
    }
}

impl TimedTranscript {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn tokens(&self) -> &[TimedToken] {
        &self.0
    }

    pub fn is_sorted(&self) -> bool {
        self.0.iter().all(|t| t.start_ms <= t.end_ms)
            && self.0.windows(2).all(|w| w[0].start_ms <= w[1].start_ms)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.0 {
            out.push_str(&serde_json::to_string(t).expect("serializable"));
            out.push('\n');
        }
        out
    }
}

/// Normalizes one word: strips leading/trailing non-alphanumerics and
/// lowercases. `None` if nothing is left.
pub fn normalize_word(word: &str) -> Option<String> {
    let trimmed = word.trim_matches(|c: char| !c.is_alphanumeric());
    if trimmed.is_empty() {
        None
    } else {
        Some(trimmed.to_lowercase())
    }
}

pub fn tokenize(text: &str) -> Vec<Token> {
    text.split_whitespace()
        .filter_map(|w| normalize_word(w).map(|n| (n, w)))
        .enumerate()
        .map(|(index, (text, original))| Token {
            text,
            original: original.to_owned(),
            index,
        })
        .collect()
}

fn levenshtein(a: &[char], b: &[char]) -> usize {
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let next = (diag + usize::from(ca != cb))
                .min(row[j] + 1)
                .min(row[j + 1] + 1);
            diag = row[j + 1];
            row[j + 1] = next;
        }
    }
    row[b.len()]
}

/// Character edit distance divided by the longer length; 0 iff equal.
pub fn token_cost(a: &Token, b: &Token) -> f64 {
    text_cost(&a.text, &b.text)
}

pub(crate) fn text_cost(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 0.0;
    }
    levenshtein(&a, &b) as f64 / longest as f64
}

/// Pairs of (auto index, manual index), monotonic, boundary to boundary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentPath {
    pub steps: Vec<(usize, usize)>,
}

pub fn dtw_align(
    auto: &[TimedToken],
    manual: &[Token],
) -> Result<(AlignmentPath, f64), AlignError> {
    if auto.is_empty() {
        return Err(AlignError::EmptyAuto);
    }
    if manual.is_empty() {
        return Err(AlignError::EmptyManual);
    }
    let (steps, cost) = dtw::dtw(auto.len(), manual.len(), |i, j| {
        token_cost(&auto[i].token, &manual[j])
    })
    .expect("both sides non-empty");
    Ok((AlignmentPath { steps }, cost))
}

/// Carries automatic timestamps over to manual tokens along `path`.
///
/// A manual token matched to several automatic tokens spans all of them.
/// Several manual tokens matched only to one automatic token share its
/// interval in proportion to their character counts. Starts are finally
/// clamped to be non-decreasing.
pub fn propagate_timestamps(
    path: &AlignmentPath,
    auto: &[TimedToken],
    manual: &[Token],
) -> Result<Vec<TimedToken>, AlignError> {
    if !dtw::is_valid_path(&path.steps, auto.len(), manual.len()) {
        return Err(AlignError::InvalidPath {
            auto: auto.len(),
            manual: manual.len(),
        });
    }

    let mut autos_of: Vec<Vec<usize>> = vec![Vec::new(); manual.len()];
    let mut manuals_of: Vec<Vec<usize>> = vec![Vec::new(); auto.len()];
    for &(a, m) in &path.steps {
        autos_of[m].push(a);
        manuals_of[a].push(m);
    }

    let mut spans: Vec<(u64, u64)> = vec![(0, 0); manual.len()];
    for (m, autos) in autos_of.iter().enumerate() {
        if autos.len() > 1 {
            let start = autos
                .iter()
                .map(|&a| auto[a].start_ms)
                .min()
                .expect("non-empty");
            let end = autos
                .iter()
                .map(|&a| auto[a].end_ms)
                .max()
                .expect("non-empty");
            spans[m] = (start, end);
        }
    }
    for (a, manuals) in manuals_of.iter().enumerate() {
        // Manual tokens that belong to this auto token alone.
        let group: Vec<usize> = manuals
            .iter()
            .copied()
            .filter(|&m| autos_of[m].len() == 1)
            .collect();
        if group.is_empty() {
            continue;
        }
        let (start, end) = (auto[a].start_ms, auto[a].end_ms);
        let duration = end.saturating_sub(start);
        let weights: Vec<u64> = group
            .iter()
            .map(|&m| manual[m].text.chars().count() as u64)
            .collect();
        let total: u64 = weights.iter().sum::<u64>().max(1);
        let mut cursor = start;
        for (k, &m) in group.iter().enumerate() {
            let share_end = if k + 1 == group.len() {
                end
            } else {
                cursor + duration * weights[k] / total
            };
            spans[m] = (cursor, share_end);
            cursor = share_end;
        }
    }

    let mut out = Vec::with_capacity(manual.len());
    let mut floor = 0;
    for (token, (start, end)) in manual.iter().zip(spans) {
        let start = start.max(floor);
        let end = end.max(start);
        floor = start;
        out.push(TimedToken::new(token.clone(), start, end));
    }
    Ok(out)
}

/// Result of aligning one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedTranscript {
    pub tokens: TimedTranscript,
    /// Set when no automatic transcription was available and tokens were
    /// spread uniformly over the audio instead.
    pub degraded: bool,
    pub cost: Option<f64>,
}

/// Manual tokens spread evenly over `duration_ms`.
pub fn uniform_spread(manual: &[Token], duration_ms: u64) -> Vec<TimedToken> {
    let n = manual.len() as u64;
    manual
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let k = k as u64;
            TimedToken::new(t.clone(), k * duration_ms / n, (k + 1) * duration_ms / n)
        })
        .collect()
}

/// Transcribe, tokenize the manual text, align, and propagate timestamps.
pub fn align_transcript(
    audio: &[u8],
    manual_text: &str,
    asr: &dyn AutomaticTranscriber,
) -> Result<AlignedTranscript, AlignError> {
    let manual = tokenize(manual_text);
    if manual.is_empty() {
        return Err(AlignError::EmptyManual);
    }
    let auto = asr.transcribe(audio)?;
    if auto.is_empty() {
        let duration = wav::decode(audio)?.duration_ms();
        return Ok(AlignedTranscript {
            tokens: TimedTranscript(uniform_spread(&manual, duration)),
            degraded: true,
            cost: None,
        });
    }
    let (path, cost) = dtw_align(&auto, &manual)?;
    let tokens = propagate_timestamps(&path, &auto, &manual)?;
    Ok(AlignedTranscript {
        tokens: TimedTranscript(tokens),
        degraded: false,
        cost: Some(cost),
    })
}

/// For each timed token, the poses that fall inside its interval. A token
/// whose interval holds no pose gets the pose nearest its midpoint (ties go
/// to the earlier pose); with an empty trace every token maps to nothing.
pub fn synchronize(timed: &[TimedToken], trace: &PoseTrace) -> Vec<(usize, Vec<usize>)> {
    timed
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut poses = trace
                .slice_by_interval(t.start_ms, t.end_ms.max(t.start_ms))
                .expect("start <= end");
            if poses.is_empty() && !trace.is_empty() {
                // Compare doubled distances to keep the midpoint integral.
                let twice_mid = i128::from(t.start_ms) + i128::from(t.end_ms);
                let nearest = trace
                    .poses
                    .iter()
                    .enumerate()
                    .min_by_key(|(k, p)| ((2 * i128::from(p.t_ms) - twice_mid).abs(), *k))
                    .map(|(k, _)| k)
                    .expect("non-empty trace");
                poses.push(nearest);
            }
            (i, poses)
        })
        .collect()
}
