//! Prints a coarse text waveform of a synthetic recording, the same
//! envelope followers use to skip silences.

use pangea::wav;
use pangea::waveform::compute_waveform;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let audio = wav::encode(&wav::synth_bursts(5, 300, 200, 16_000), 16_000);
    let wf = compute_waveform(&audio, 50)?;
    let bars: String = wf
        .bins
        .iter()
        .map(|&v| match (v * 4.0).round() as u8 {
            0 => ' ',
            1 => '.',
            2 => ':',
            3 => '|',
            _ => '#',
        })
        .collect();
    println!("{} ms", wf.duration_ms);
    println!("[{bars}]");
    Ok(())
}
