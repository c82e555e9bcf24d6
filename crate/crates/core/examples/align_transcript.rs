//! Aligns a typed transcript to noisy recognizer output and prints the
//! word timings it inherits. The recognizer heard "country" for "counter".

use std::path::Path;

use pangea::align::{align_transcript, MockTranscriber};
use pangea::wav;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let e2e = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/e2e");
    let text = std::fs::read_to_string(e2e.join("transcript.txt"))?;
    let asr = MockTranscriber::from_jsonl_file(&e2e.join("asr/default.jsonl"))?;
    let audio = wav::encode(&wav::synth_bursts(18, 300, 100, 16_000), 16_000);

    let aligned = align_transcript(&audio, text.trim(), &asr)?;
    println!(
        "dtw cost {:.3}, degraded: {}",
        aligned.cost.unwrap_or(f64::NAN),
        aligned.degraded
    );
    for t in aligned.tokens.tokens() {
        println!("{:>5}–{:<5} {}", t.start_ms, t.end_ms, t.token.original);
    }
    Ok(())
}
