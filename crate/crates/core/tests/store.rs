mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use chrono::Duration;
use pangea::align::TimedTranscript;
use pangea::clock::ManualClock;
use pangea::navgraph::NavPath;
use pangea::store::{
    AnnotationDoc, AnnotationFilter, AnnotationStatus, Instruction, LocalBackend, MemoryBackend,
    Outcome, Store, StoreError, TaskKind, TaskRecord, TaskStatus,
};
use pangea::trace::PoseTrace;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

/// One store per backend, sharing nothing; the temp dir keeps the local one alive.
fn stores() -> Vec<(&'static str, Store, Arc<ManualClock>, Option<TempDir>)> {
    let mem_clock = Arc::new(ManualClock::epoch());
    let dir = tempfile::tempdir().unwrap();
    let local_clock = Arc::new(ManualClock::epoch());
    vec![
        (
            "memory",
            Store::new(Arc::new(MemoryBackend::default()), mem_clock.clone()),
            mem_clock,
            None,
        ),
        (
            "local",
            Store::new(
                Arc::new(LocalBackend::open(dir.path()).unwrap()),
                local_clock.clone(),
            ),
            local_clock,
            Some(dir),
        ),
    ]
}

fn guide_tasks(store: &Store, n: usize) {
    let now = store.now();
    let tasks: Vec<TaskRecord> = (0..n)
        .map(|i| {
            TaskRecord::new_guide(
                format!("t{i:02}"),
                "house",
                NavPath::new(["hall", "kitchen"]),
                false,
                now + Duration::seconds(i as i64),
            )
        })
        .collect();
    store.put_tasks(&tasks).unwrap();
}

#[test]
fn concurrent_claims_are_exclusive() {
    for (name, store, _, _dir) in stores() {
        guide_tasks(&store, 20);
        let claimed: Vec<Vec<String>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..8)
                .map(|w| {
                    let store = store.clone();
                    s.spawn(move || {
                        let mut mine = Vec::new();
                        while let Some(t) = store
                            .claim_task(TaskKind::Guide, &format!("w{w}"), 60)
                            .unwrap()
                        {
                            assert_eq!(t.claimed_by.as_deref(), Some(format!("w{w}").as_str()));
                            mine.push(t.task_id);
                        }
                        mine
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let all: Vec<&String> = claimed.iter().flatten().collect();
        let unique: BTreeSet<&String> = all.iter().copied().collect();
        assert_eq!(all.len(), 20, "{name}");
        assert_eq!(unique.len(), 20, "{name}");
    }
}

#[test]
fn claims_oldest_first_and_respects_kind() {
    for (name, store, _, _dir) in stores() {
        guide_tasks(&store, 3);
        assert!(
            store
                .claim_task(TaskKind::Follower, "w", 60)
                .unwrap()
                .is_none(),
            "{name}"
        );
        let ids: Vec<String> = (0..3)
            .map(|_| {
                store
                    .claim_task(TaskKind::Guide, "w", 60)
                    .unwrap()
                    .unwrap()
                    .task_id
            })
            .collect();
        assert_eq!(ids, ["t00", "t01", "t02"], "{name}");
        assert!(store
            .claim_task(TaskKind::Guide, "w", 60)
            .unwrap()
            .is_none());
        assert!(matches!(
            store.claim_task(TaskKind::Guide, "w", 0),
            Err(StoreError::BadLease)
        ));
    }
}

#[test]
fn expired_leases_are_reclaimed() {
    for (name, store, clock, _dir) in stores() {
        guide_tasks(&store, 1);
        let first = store.claim_task(TaskKind::Guide, "w1", 5).unwrap().unwrap();
        assert_eq!(first.lease_expiry, Some(store.now() + Duration::minutes(5)));
        clock.advance(Duration::minutes(4));
        assert!(
            store
                .claim_task(TaskKind::Guide, "w2", 5)
                .unwrap()
                .is_none(),
            "{name}"
        );
        clock.advance(Duration::minutes(1));
        let again = store.claim_task(TaskKind::Guide, "w2", 5).unwrap().unwrap();
        assert_eq!(again.task_id, first.task_id);
        assert_eq!(again.claimed_by.as_deref(), Some("w2"));

        let done = store.complete_task(&again.task_id).unwrap();
        assert_eq!(done.status, TaskStatus::Completed);
        clock.advance(Duration::days(1));
        assert!(store
            .claim_task(TaskKind::Guide, "w3", 5)
            .unwrap()
            .is_none());
    }
}

#[test]
fn invalid_tasks_write_nothing() {
    for (name, store, _, _dir) in stores() {
        let now = store.now();
        let good = TaskRecord::new_guide("ok", "house", NavPath::new(["hall"]), false, now);
        let bad = TaskRecord::new_guide(
            "bad",
            "house",
            NavPath::new(Vec::<String>::new()),
            false,
            now,
        );
        assert!(matches!(
            store.put_tasks(&[good, bad]),
            Err(StoreError::Invalid(_))
        ));
        assert!(
            store.list_docs::<TaskRecord>().unwrap().is_empty(),
            "{name}"
        );
    }
}

#[test]
fn shuffled_chunks_reassemble() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (name, store, _, _dir) in stores() {
        for trial in 0..10 {
            let len = rng.gen_range(0..5000);
            let data: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            let size = rng.gen_range(1..700);
            let chunks: Vec<&[u8]> = data.chunks(size).collect();
            let mut order: Vec<usize> = (0..chunks.len()).collect();
            order.shuffle(&mut rng);
            let key = format!("audio/t{trial}.wav");
            for &i in &order {
                store.blob_append(&key, i as u32, chunks[i]).unwrap();
            }
            if !chunks.is_empty() {
                // A retried chunk with the same bytes is fine.
                store
                    .blob_append(&key, order[0] as u32, chunks[order[0]])
                    .unwrap();
            }
            let blob = store.blob_finalize(&key, chunks.len() as u32).unwrap();
            assert_eq!(store.blob_get(&key).unwrap(), data, "{name} trial {trial}");
            assert_eq!(blob.size_bytes, data.len() as u64);
            assert_eq!(blob.content_hash, pangea::align::asr::audio_digest(&data));
            assert_eq!(
                store.blob_finalize(&key, chunks.len() as u32).unwrap(),
                blob
            );
        }
    }
}

#[test]
fn chunk_errors() {
    for (name, store, _, _dir) in stores() {
        let key = "audio/x.wav";
        store.blob_append(key, 0, b"ab").unwrap();
        store.blob_append(key, 2, b"ef").unwrap();
        assert!(
            matches!(store.blob_get(key), Err(StoreError::NotFinalized(_))),
            "{name}"
        );
        assert!(matches!(
            store.blob_append(key, 0, b"zz"),
            Err(StoreError::DuplicateChunk { index: 0, .. })
        ));
        assert!(matches!(
            store.blob_finalize(key, 3),
            Err(StoreError::MissingChunk { index: 1, .. })
        ));
        assert!(matches!(
            store.blob_finalize(key, 2),
            Err(StoreError::MissingChunk { index: 1, .. })
        ));
        store.blob_append(key, 1, b"cd").unwrap();
        assert!(matches!(
            store.blob_finalize(key, 2),
            Err(StoreError::ExtraChunk { index: 2, .. })
        ));
        store.blob_finalize(key, 3).unwrap();
        assert_eq!(store.blob_get(key).unwrap(), b"abcdef");
        assert!(matches!(
            store.blob_append(key, 3, b"gh"),
            Err(StoreError::AlreadyFinalized(_))
        ));
        assert!(store.blob_get("audio/none.wav").unwrap_err().is_not_found());
        assert!(matches!(
            store.blob_append("../escape", 0, b""),
            Err(StoreError::BadKey(_))
        ));
        assert!(matches!(
            store.blob_append("a/.hidden", 0, b""),
            Err(StoreError::BadKey(_))
        ));
    }
}

fn doc(
    id: &str,
    kind: TaskKind,
    worker: &str,
    env: &str,
    status: AnnotationStatus,
) -> AnnotationDoc {
    let transcript = "go left";
    let timed = (status != AnnotationStatus::Raw).then(|| {
        TimedTranscript(pangea::align::uniform_spread(
            &pangea::align::tokenize(transcript),
            1000,
        ))
    });
    AnnotationDoc {
        annotation_id: id.into(),
        task_id: format!("task-{id}"),
        worker_id: worker.into(),
        environment_id: env.into(),
        kind,
        path: NavPath::new(["hall", "kitchen"]),
        audio_ref: (kind == TaskKind::Guide).then(|| format!("audio/{id}.wav")),
        transcript: (kind == TaskKind::Guide).then(|| transcript.to_owned()),
        timed_transcript: timed,
        pose_trace: PoseTrace::new(format!("s-{id}")),
        outcome: if kind == TaskKind::Guide {
            Outcome::Submitted
        } else {
            Outcome::Done
        },
        status,
        instruction: None,
        reference_path: None,
        alignment_attempts: 0,
        alignment_note: None,
        created_at: chrono::DateTime::UNIX_EPOCH,
    }
}

#[test]
fn annotation_filters() {
    use AnnotationStatus::*;
    use TaskKind::*;
    for (name, store, _, _dir) in stores() {
        for d in [
            doc("a1", Guide, "w1", "house", Raw),
            doc("a2", Guide, "w2", "house", Aligned),
            doc("a3", Follower, "w2", "house", Raw),
            doc("a4", Follower, "w2", "demo", Raw),
            doc("a5", Follower, "w1", "house", Raw),
            doc("a6", Guide, "w2", "demo", Degraded),
        ] {
            store.put_doc(&d).unwrap();
        }
        let ids = |f: AnnotationFilter| -> Vec<String> {
            store
                .list_annotations(&f)
                .unwrap()
                .into_iter()
                .map(|d| d.annotation_id)
                .collect()
        };
        assert_eq!(
            ids(AnnotationFilter {
                kind: Some(Follower),
                worker_id: Some("w2".into()),
                ..Default::default()
            }),
            ["a3", "a4"],
            "{name}"
        );
        assert_eq!(
            ids(AnnotationFilter {
                environment_id: Some("demo".into()),
                ..Default::default()
            }),
            ["a4", "a6"]
        );
        assert_eq!(
            ids(AnnotationFilter {
                status: Some(Raw),
                kind: Some(Guide),
                ..Default::default()
            }),
            ["a1"]
        );
        assert_eq!(ids(AnnotationFilter::default()).len(), 6);
    }
}

#[test]
fn annotation_validation() {
    for (name, store, _, _dir) in stores() {
        let mut d = doc(
            "a1",
            TaskKind::Guide,
            "w1",
            "house",
            AnnotationStatus::Aligned,
        );
        d.transcript = Some("three words here".into());
        assert!(
            matches!(store.put_doc(&d), Err(StoreError::Invalid(_))),
            "{name}"
        );
        let mut f = doc(
            "a2",
            TaskKind::Follower,
            "w1",
            "house",
            AnnotationStatus::Raw,
        );
        f.outcome = Outcome::Submitted;
        assert!(matches!(store.put_doc(&f), Err(StoreError::Invalid(_))));
        let mut g = doc("a3", TaskKind::Guide, "w1", "house", AnnotationStatus::Raw);
        g.audio_ref = None;
        assert!(matches!(store.put_doc(&g), Err(StoreError::Invalid(_))));
        assert!(store
            .get_doc::<AnnotationDoc>("a1")
            .unwrap_err()
            .is_not_found());
    }
}

#[test]
fn local_store_persists_and_uses_documented_layout() {
    let dir = tempfile::tempdir().unwrap();
    {
        let store = Store::local(dir.path()).unwrap();
        store
            .put_doc(&doc(
                "a1",
                TaskKind::Guide,
                "w1",
                "house",
                AnnotationStatus::Raw,
            ))
            .unwrap();
        store.blob_append("audio/a1.wav", 0, b"RIFF").unwrap();
        store.blob_finalize("audio/a1.wav", 1).unwrap();
        let task = TaskRecord::new_follower(
            "f1",
            "house",
            "hall",
            Instruction::Text { text: "go".into() },
            None,
            store.now(),
        );
        store.put_tasks(&[task]).unwrap();
    }
    let root = dir.path();
    assert!(root.join("docs/annotations/a1.json").is_file());
    assert!(root.join("docs/tasks/f1.json").is_file());
    assert!(root.join("blobs/objects/audio/a1.wav").is_file());
    assert!(root.join("blobs/refs/audio/a1.wav.json").is_file());
    assert!(!root.join("blobs/staging/audio/a1.wav").exists());
    let leftovers: Vec<_> = walk(root)
        .into_iter()
        .filter(|p| {
            p.file_name()
                .unwrap()
                .to_string_lossy()
                .starts_with(".tmp-")
        })
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");

    let reopened = Store::local(root).unwrap();
    let d: AnnotationDoc = reopened.get_doc("a1").unwrap();
    assert_eq!(d.worker_id, "w1");
    assert_eq!(reopened.blob_get("audio/a1.wav").unwrap(), b"RIFF");
    let t = reopened
        .claim_task(TaskKind::Follower, "w9", 60)
        .unwrap()
        .unwrap();
    assert_eq!(t.task_id, "f1");

    std::fs::write(root.join("docs/annotations/a1.json"), "{ not json").unwrap();
    assert!(matches!(
        reopened.get_doc::<AnnotationDoc>("a1"),
        Err(StoreError::Corrupt(..))
    ));
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn separate_local_handles_share_the_claim_lock() {
    // Two backends over one directory behave like two server processes.
    let dir = tempfile::tempdir().unwrap();
    let a = Store::local(dir.path()).unwrap();
    let b = Store::local(dir.path()).unwrap();
    guide_tasks(&a, 12);
    let claimed: Vec<String> = std::thread::scope(|s| {
        let ha = s.spawn(|| drain(&a, "wa"));
        let hb = s.spawn(|| drain(&b, "wb"));
        let mut all = ha.join().unwrap();
        all.extend(hb.join().unwrap());
        all
    });
    let unique: BTreeSet<&String> = claimed.iter().collect();
    assert_eq!((claimed.len(), unique.len()), (12, 12));
}

fn drain(store: &Store, worker: &str) -> Vec<String> {
    std::iter::from_fn(|| store.claim_task(TaskKind::Guide, worker, 60).unwrap())
        .map(|t| t.task_id)
        .collect()
}
