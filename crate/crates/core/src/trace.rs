//! Pose traces: timestamped records of an annotator's virtual camera.

use std::f64::consts::{FRAC_PI_2, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::navgraph::{NavPath, NavigationGraph};

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("pose at t={t_ms} ms precedes previous pose at t={last_ms} ms")]
    NonMonotonic { last_ms: u64, t_ms: u64 },
    #[error("heading {0} rad outside [0, 2π)")]
    HeadingOutOfRange(f64),
    #[error("pitch {0} rad outside [-π/2, π/2]")]
    PitchOutOfRange(f64),
    #[error("trace is empty")]
    Empty,
    #[error("interval start {start_ms} ms is after end {end_ms} ms")]
    InvertedInterval { start_ms: u64, end_ms: u64 },
}

/// One camera state sample. Wire form is one JSON object per pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    /// Client session clock, milliseconds since session start.
    pub t_ms: u64,
    pub node: String,
    pub heading_rad: f64,
    pub pitch_rad: f64,
    /// Guide-audio playhead (follower sessions only).
    #[serde(default)]
    pub audio_t_ms: Option<u64>,
}

impl Pose {
    pub fn new(t_ms: u64, node: impl Into<String>, heading_rad: f64, pitch_rad: f64) -> Self {
        Pose {
            t_ms,
            node: node.into(),
            heading_rad,
            pitch_rad,
            audio_t_ms: None,
        }
    }

    pub fn with_audio(mut self, audio_t_ms: u64) -> Self {
        self.audio_t_ms = Some(audio_t_ms);
        self
    }

    pub fn check_ranges(&self) -> Result<(), TraceError> {
        if !(0.0..TAU).contains(&self.heading_rad) {
            return Err(TraceError::HeadingOutOfRange(self.heading_rad));
        }
        if !(-FRAC_PI_2..=FRAC_PI_2).contains(&self.pitch_rad) {
            return Err(TraceError::PitchOutOfRange(self.pitch_rad));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PoseTrace {
    pub session_id: String,
    pub poses: Vec<Pose>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceViolation {
    UnknownNode {
        index: usize,
        node: String,
    },
    Teleport {
        index: usize,
        from: String,
        to: String,
    },
}

impl PoseTrace {
    pub fn new(session_id: impl Into<String>) -> Self {
        PoseTrace {
            session_id: session_id.into(),
            poses: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn last(&self) -> Option<&Pose> {
        self.poses.last()
    }

    /// Checks that `pose` could be appended without appending it.
    pub fn check_next(&self, pose: &Pose) -> Result<(), TraceError> {
        pose.check_ranges()?;
        if let Some(last) = self.poses.last() {
            if pose.t_ms < last.t_ms {
                return Err(TraceError::NonMonotonic {
                    last_ms: last.t_ms,
                    t_ms: pose.t_ms,
                });
            }
        }
        Ok(())
    }

    /// Appends a pose. Equal timestamps are allowed and keep arrival order.
    pub fn append_pose(&mut self, pose: Pose) -> Result<(), TraceError> {
        self.check_next(&pose)?;
        self.poses.push(pose);
        Ok(())
    }

    /// Node sequence visited, consecutive duplicates collapsed.
    pub fn extract_path(&self) -> Result<NavPath, TraceError> {
        if self.poses.is_empty() {
            return Err(TraceError::Empty);
        }
        let mut nodes: Vec<String> = Vec::new();
        for pose in &self.poses {
            if nodes.last() != Some(&pose.node) {
                nodes.push(pose.node.clone());
            }
        }
        Ok(NavPath::from(nodes))
    }

    /// Indices of poses with `start_ms <= t_ms <= end_ms`, in order.
    pub fn slice_by_interval(&self, start_ms: u64, end_ms: u64) -> Result<Vec<usize>, TraceError> {
        if start_ms > end_ms {
            return Err(TraceError::InvertedInterval { start_ms, end_ms });
        }
        // t_ms is non-decreasing, so the matching poses are contiguous.
        let lo = self.poses.partition_point(|p| p.t_ms < start_ms);
        let hi = self.poses.partition_point(|p| p.t_ms <= end_ms);
        Ok((lo..hi.max(lo)).collect())
    }

    pub fn validate(&self, graph: &NavigationGraph) -> Vec<TraceViolation> {
        let mut out = Vec::new();
        for (index, pose) in self.poses.iter().enumerate() {
            if !graph.contains(&pose.node) {
                out.push(TraceViolation::UnknownNode {
                    index,
                    node: pose.node.clone(),
                });
            }
        }
        for (i, pair) in self.poses.windows(2).enumerate() {
            let (a, b) = (&pair[0].node, &pair[1].node);
            if a != b && graph.contains(a) && graph.contains(b) && !graph.has_edge(a, b) {
                out.push(TraceViolation::Teleport {
                    index: i + 1,
                    from: a.clone(),
                    to: b.clone(),
                });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::navgraph::tests::chain;
    use proptest::prelude::*;

    fn trace_at(nodes: &[&str]) -> PoseTrace {
        let mut t = PoseTrace::new("s");
        for (i, n) in nodes.iter().enumerate() {
            t.append_pose(Pose::new(i as u64 * 100, *n, 0.0, 0.0))
                .unwrap();
        }
        t
    }

    #[test]
    fn append_monotonicity_and_ranges() {
        let mut t = PoseTrace::new("s");
        t.append_pose(Pose::new(100, "A", 0.0, 0.0)).unwrap();
        t.append_pose(Pose::new(100, "A", 1.0, 0.0)).unwrap();
        assert_eq!(
            t.append_pose(Pose::new(50, "A", 0.0, 0.0)),
            Err(TraceError::NonMonotonic {
                last_ms: 100,
                t_ms: 50
            })
        );
        assert_eq!(
            t.append_pose(Pose::new(200, "A", 7.0, 0.0)),
            Err(TraceError::HeadingOutOfRange(7.0))
        );
        assert!(t.append_pose(Pose::new(200, "A", TAU, 0.0)).is_err());
        assert!(t.append_pose(Pose::new(200, "A", 0.0, -FRAC_PI_2)).is_ok());
        assert!(t.append_pose(Pose::new(200, "A", 0.0, 1.6)).is_err());
        assert_eq!(t.len(), 3);
    }

    #[test]
    fn extract_path_cases() {
        assert_eq!(
            trace_at(&["A", "A", "A", "B", "B", "C"])
                .extract_path()
                .unwrap(),
            NavPath::new(["A", "B", "C"])
        );
        assert_eq!(
            trace_at(&["A", "A"]).extract_path().unwrap(),
            NavPath::new(["A"])
        );
        assert_eq!(
            trace_at(&["A", "B", "A"]).extract_path().unwrap(),
            NavPath::new(["A", "B", "A"])
        );
        assert_eq!(PoseTrace::new("s").extract_path(), Err(TraceError::Empty));
    }

    #[test]
    fn slice_cases() {
        let t = trace_at(&["A", "A", "A"]);
        assert_eq!(t.slice_by_interval(50, 150).unwrap(), vec![1]);
        assert_eq!(t.slice_by_interval(0, 200).unwrap(), vec![0, 1, 2]);
        assert!(t.slice_by_interval(300, 400).unwrap().is_empty());
        assert!(matches!(
            t.slice_by_interval(10, 5),
            Err(TraceError::InvertedInterval { .. })
        ));
    }

    #[test]
    fn validate_cases() {
        let g = chain();
        assert!(trace_at(&["A", "B"]).validate(&g).is_empty());
        assert_eq!(
            trace_at(&["A", "C"]).validate(&g),
            vec![TraceViolation::Teleport {
                index: 1,
                from: "A".into(),
                to: "C".into()
            }]
        );
        assert_eq!(
            trace_at(&["Z"]).validate(&g),
            vec![TraceViolation::UnknownNode {
                index: 0,
                node: "Z".into()
            }]
        );
    }

    #[test]
    fn pose_wire_format() {
        let p: Pose = serde_json::from_str(
            r#"{"t_ms": 5, "node": "A", "heading_rad": 0.5, "pitch_rad": 0.0, "audio_t_ms": null}"#,
        )
        .unwrap();
        assert_eq!(p, Pose::new(5, "A", 0.5, 0.0));
        let json = serde_json::to_string(&p.with_audio(40)).unwrap();
        assert_eq!(
            json,
            r#"{"t_ms":5,"node":"A","heading_rad":0.5,"pitch_rad":0.0,"audio_t_ms":40}"#
        );
    }

    fn walk() -> impl Strategy<Value = Vec<(&'static str, u64)>> {
        // Random walk on the chain A–B–C with dwell steps.
        prop::collection::vec((0usize..3, 0u64..50), 1..30).prop_map(|steps| {
            let order = ["A", "B", "C"];
            let mut at = 0usize;
            let mut t = 0;
            let mut out = Vec::new();
            for (mv, dt) in steps {
                at = match mv {
                    0 if at > 0 => at - 1,
                    1 if at < 2 => at + 1,
                    _ => at,
                };
                t += dt;
                out.push((order[at], t));
            }
            out
        })
    }

    fn build(steps: &[(&str, u64)]) -> PoseTrace {
        let mut t = PoseTrace::new("p");
        for (n, ms) in steps {
            t.append_pose(Pose::new(*ms, *n, 0.0, 0.0)).unwrap();
        }
        t
    }

    proptest! {
        #[test]
        fn valid_trace_yields_valid_path(steps in walk()) {
            let g = chain();
            let t = build(&steps);
            prop_assert!(t.validate(&g).is_empty());
            prop_assert!(g.validate_path(&t.extract_path().unwrap()).is_empty());
        }

        #[test]
        fn duplicating_a_pose_keeps_path(steps in walk(), at in any::<prop::sample::Index>()) {
            let t = build(&steps);
            let mut dup = t.clone();
            let i = at.index(dup.poses.len());
            let p = dup.poses[i].clone();
            dup.poses.insert(i, p);
            prop_assert_eq!(t.extract_path().unwrap(), dup.extract_path().unwrap());
        }

        #[test]
        fn full_slice_returns_every_index(steps in walk()) {
            let t = build(&steps);
            let all = t.slice_by_interval(0, u64::MAX).unwrap();
            prop_assert_eq!(all, (0..t.len()).collect::<Vec<_>>());
        }
    }
}
