//! PCM 16-bit mono WAV, the storage format for recorded audio.

use std::io::Cursor;

use thiserror::Error;

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Error)]
pub enum WavError {
    #[error("malformed WAV: {0}")]
    Malformed(String),
    #[error("unsupported encoding: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pcm {
    pub sample_rate: u32,
    pub samples: Vec<i16>,
}

impl Pcm {
    pub fn duration_ms(&self) -> u64 {
        if self.sample_rate == 0 {
            return 0;
        }
        self.samples.len() as u64 * 1000 / u64::from(self.sample_rate)
    }
}

fn malformed(e: hound::Error) -> WavError {
    WavError::Malformed(e.to_string())
}

/// Decodes a PCM 16-bit mono WAV. Any other layout is `Unsupported`.
pub fn decode(bytes: &[u8]) -> Result<Pcm, WavError> {
    let reader = hound::WavReader::new(Cursor::new(bytes)).map_err(|e| match e {
        hound::Error::Unsupported => WavError::Unsupported("non-PCM format".into()),
        other => malformed(other),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(WavError::Unsupported(format!("{} channels", spec.channels)));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(WavError::Unsupported(format!(
            "{:?} {}-bit samples",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(malformed)?;
    Ok(Pcm {
        sample_rate: spec.sample_rate,
        samples,
    })
}

pub fn encode(samples: &[i16], sample_rate: u32) -> Vec<u8> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut out = Cursor::new(Vec::with_capacity(44 + samples.len() * 2));
    {
        let mut writer = hound::WavWriter::new(&mut out, spec).expect("in-memory writer");
        for &s in samples {
            writer.write_sample(s).expect("in-memory write");
        }
        writer.finalize().expect("in-memory finalize");
    }
    out.into_inner()
}

/// Sample rate from the header only.
pub fn sample_rate(bytes: &[u8]) -> Result<u32, WavError> {
    hound::WavReader::new(Cursor::new(bytes))
        .map(|r| r.spec().sample_rate)
        .map_err(malformed)
}

/// A tone burst of `tone_ms` followed by `silence_ms` of silence, repeated
/// `bursts` times. Handy for fixtures and demos.
pub fn synth_bursts(bursts: usize, tone_ms: u32, silence_ms: u32, sample_rate: u32) -> Vec<i16> {
    let per_ms = sample_rate as usize / 1000;
    let mut out = Vec::new();
    for _ in 0..bursts {
        for n in 0..tone_ms as usize * per_ms {
            let phase = n as f64 * 440.0 * std::f64::consts::TAU / f64::from(sample_rate);
            out.push((phase.sin() * 12_000.0) as i16);
        }
        out.extend(std::iter::repeat_n(0i16, silence_ms as usize * per_ms));
    }
    out
}
