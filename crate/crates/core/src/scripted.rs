//! Headless annotators that drive a server through its REST API, for
//! demos, smoke tests and load generation.

use std::time::Duration;

use crate::client::{Client, ClientError};
use crate::navgraph::NavPath;
use crate::server::InstructionBody;
use crate::store::{Outcome, TaskKind, TaskPayload};
use crate::trace::Pose;
use crate::waveform::WaveformEnvelope;

/// Session-clock spacing between consecutive poses.
pub const STEP_MS: u64 = 250;
/// Poses per HTTP batch.
pub const BATCH: usize = 3;

#[derive(Debug, Clone)]
pub struct GuideScript {
    pub worker_id: String,
    pub transcript: String,
    /// WAV bytes of the recording.
    pub audio: Vec<u8>,
    pub chunk_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuideRun {
    pub session_id: String,
    pub annotation_id: String,
    pub path: NavPath,
    pub poses: Vec<Pose>,
}

/// Two poses per node: arrive looking ahead, then glance around.
fn walk_poses(path: &NavPath, audio_ms: Option<u64>) -> Vec<Pose> {
    let mut poses = Vec::new();
    for (i, node) in path.nodes().iter().enumerate() {
        for glance in 0..2u64 {
            let t_ms = (2 * i as u64 + glance) * STEP_MS;
            let heading = (i as f64 * 0.7 + glance as f64 * 1.3) % std::f64::consts::TAU;
            let mut pose = Pose::new(t_ms, node.clone(), heading, 0.1 * glance as f64);
            if let Some(total) = audio_ms {
                // Playhead advances with the walk and stops at the end.
                pose = pose.with_audio(t_ms.min(total));
            }
            poses.push(pose);
        }
    }
    poses
}

fn send_poses(
    client: &Client,
    session: &str,
    poses: &[Pose],
    seq: &mut u64,
) -> Result<(), ClientError> {
    for batch in poses.chunks(BATCH) {
        client.post_events(session, *seq, batch)?;
        *seq += 1;
    }
    Ok(())
}

/// Claims a guide task, walks its path while recording (pausing once
/// half-way), uploads the audio in chunks in the background of
/// transcription, and submits.
pub fn run_guide(client: &Client, script: &GuideScript) -> Result<GuideRun, ClientError> {
    let session = client.create_session(&script.worker_id, TaskKind::Guide)?;
    let id = session.session_id;
    let TaskPayload::Guide { path } = session.task.payload else {
        unreachable!("guide session carries a guide task");
    };
    let poses = walk_poses(&path, None);
    let (first, second) = poses.split_at(poses.len() / 2);
    let chunks: Vec<&[u8]> = script.audio.chunks(script.chunk_size.max(1)).collect();
    let (early, late) = chunks.split_at(chunks.len() / 2);

    let mut seq = 1;
    client.start_recording(&id)?;
    send_poses(client, &id, first, &mut seq)?;
    for (i, c) in early.iter().enumerate() {
        client.upload_chunk(&id, i as u32, c)?;
    }
    client.pause(&id)?;
    client.resume(&id)?;
    send_poses(client, &id, second, &mut seq)?;
    client.stop_recording(&id)?;
    client.set_transcript(&id, &script.transcript)?;
    for (i, c) in late.iter().enumerate() {
        client.upload_chunk(&id, (early.len() + i) as u32, c)?;
    }
    client.finalize_audio(&id, chunks.len() as u32)?;
    let done = client.submit_when_ready(&id, Duration::from_secs(10))?;
    Ok(GuideRun {
        session_id: id,
        annotation_id: done.annotation_id,
        path,
        poses,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FollowerRun {
    pub session_id: String,
    pub annotation_id: String,
    pub instruction: InstructionBody,
    pub waveform: Option<WaveformEnvelope>,
    pub path: NavPath,
}

/// Claims a follower task, fetches the instruction (and its waveform when
/// it is audio), walks `walk` and reports `outcome`. An empty `walk` gives
/// up on the spot.
pub fn run_follower(
    client: &Client,
    worker_id: &str,
    walk: &[&str],
    outcome: Outcome,
) -> Result<FollowerRun, ClientError> {
    let session = client.create_session(worker_id, TaskKind::Follower)?;
    let id = session.session_id;
    let instruction = client.instruction(&id)?;
    let waveform = match &instruction {
        InstructionBody::Audio(_) => Some(client.waveform(&id)?),
        InstructionBody::Text(_) => None,
    };
    let audio_ms = waveform.as_ref().map(|w| w.duration_ms);
    let poses = walk_poses(&NavPath::new(walk.iter().copied()), audio_ms);
    let mut seq = 1;
    send_poses(client, &id, &poses, &mut seq)?;
    let done = client.complete(&id, outcome)?;
    Ok(FollowerRun {
        session_id: id,
        annotation_id: done.annotation_id,
        instruction,
        waveform,
        path: done.path,
    })
}
