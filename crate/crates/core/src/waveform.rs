//! Peak envelopes for click-to-seek waveform displays.

use serde::{Deserialize, Serialize};

use crate::wav::{self, WavError};

pub const DEFAULT_BINS: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformEnvelope {
    /// Per-bin peak, normalized by the global peak, in [0, 1].
    pub bins: Vec<f64>,
    pub duration_ms: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum WaveformError {
    #[error(transparent)]
    Wav(#[from] WavError),
    #[error("bin count must be at least 1")]
    NoBins,
}

/// Envelope of a PCM 16-bit mono WAV.
pub fn compute_waveform(audio: &[u8], bins: usize) -> Result<WaveformEnvelope, WaveformError> {
    if bins == 0 {
        return Err(WaveformError::NoBins);
    }
    let pcm = wav::decode(audio)?;
    Ok(WaveformEnvelope {
        bins: envelope(&pcm.samples, bins),
        duration_ms: pcm.duration_ms(),
    })
}

/// Splits `samples` into `bins` contiguous ranges (the first
/// `len % bins` ranges one sample longer) and takes the peak of each,
/// divided by the global peak.
pub fn envelope(samples: &[i16], bins: usize) -> Vec<f64> {
    assert!(bins > 0);
    let base = samples.len() / bins;
    let extra = samples.len() % bins;
    let mut peaks = Vec::with_capacity(bins);
    let mut start = 0;
    for b in 0..bins {
        let len = base + usize::from(b < extra);
        let peak = samples[start..start + len]
            .iter()
            .map(|s| i32::from(*s).abs())
            .max()
            .unwrap_or(0);
        peaks.push(peak);
        start += len;
    }
    let global = peaks.iter().copied().max().unwrap_or(0);
    if global == 0 {
        return vec![0.0; bins];
    }
    peaks
        .into_iter()
        .map(|p| f64::from(p) / f64::from(global))
        .collect()
}
