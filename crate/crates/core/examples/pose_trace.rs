//! Builds a pose trace, extracts the visited path and finds the poses
//! recorded while each word was spoken.

use pangea::align::{synchronize, tokenize, TimedToken};
use pangea::trace::{Pose, PoseTrace};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut trace = PoseTrace::new("demo");
    for (t, node, heading) in [
        (0, "hall", 0.0),
        (400, "hall", 0.8),
        (900, "kitchen", 1.2),
        (1500, "kitchen", 2.0),
        (2100, "dining", 2.4),
    ] {
        trace.append_pose(Pose::new(t, node, heading, 0.0))?;
    }
    println!("path: {}", trace.extract_path()?);

    let words: Vec<TimedToken> = tokenize("Go past the kitchen")
        .into_iter()
        .zip([(0, 300), (350, 600), (650, 800), (850, 1400)])
        .map(|(t, (s, e))| TimedToken::new(t, s, e))
        .collect();
    for (k, poses) in synchronize(&words, &trace) {
        let nodes: Vec<&str> = poses
            .iter()
            .map(|&i| trace.poses[i].node.as_str())
            .collect();
        println!(
            "{:<8} -> poses {poses:?} at {nodes:?}",
            words[k].token.original
        );
    }
    println!(
        "poses in 800..=1600 ms: {:?}",
        trace.slice_by_interval(800, 1600)?
    );
    Ok(())
}
