//! Tooling for collecting spatio-temporally grounded navigation
//! instructions in panoramic graph environments.
//!
//! Guides walk a path through a navigation graph while recording a spoken
//! instruction and then transcribe it; Followers listen and try to walk the
//! same path. Both produce pose traces. The alignment pipeline puts
//! timestamps on the manual transcript so every word can be matched to what
//! the annotator saw and did, and the metrics module scores Follower paths
//! against Guide paths.

pub mod align;
pub mod cli;
pub mod client;
pub mod clock;
pub mod config;
pub mod dtw;
pub mod environment;
pub mod metrics;
pub mod navgraph;
pub mod scripted;
pub mod server;
pub mod store;
pub mod trace;
pub mod wav;
pub mod waveform;

pub use navgraph::{NavPath, NavigationGraph};
pub use trace::{Pose, PoseTrace};
