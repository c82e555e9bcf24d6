//! Uploads a recording in shuffled chunks to an on-disk store and checks
//! that the finalized blob matches the original.

use pangea::store::Store;
use pangea::wav;
use sha2::{Digest, Sha256};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let store = Store::local(dir.path())?;
    let audio = wav::encode(&wav::synth_bursts(6, 250, 150, 16_000), 16_000);

    let mut chunks: Vec<(u32, &[u8])> = audio
        .chunks(4096)
        .enumerate()
        .map(|(k, c)| (k as u32, c))
        .collect();
    // Arrival order of a flaky connection.
    chunks.reverse();
    chunks.swap(0, 2);
    for (k, bytes) in &chunks {
        store.blob_append("audio/demo.wav", *k, bytes)?;
    }
    let order: Vec<u32> = chunks.iter().map(|(k, _)| *k).collect();
    println!("uploaded {} chunks in order {order:?}", chunks.len());

    let blob = store.blob_finalize("audio/demo.wav", chunks.len() as u32)?;
    let local = hex::encode(Sha256::digest(&audio));
    println!("{} bytes, sha256 {}", blob.size_bytes, blob.content_hash);
    println!("matches local copy: {}", blob.content_hash == local);
    println!("stored under {}", dir.path().display());
    Ok(())
}
