mod common;

use std::time::Duration;

use common::{e2e_audio, e2e_transcript, fixture, Harness};
use pangea::client::Client;
use pangea::environment::graph_key;
use pangea::navgraph::NavPath;
use pangea::scripted::{run_follower, run_guide, GuideScript};
use pangea::server::{InstructionBody, SessionState};
use pangea::store::{AnnotationDoc, AnnotationStatus, Outcome, TaskKind};
use pangea::trace::Pose;

fn guide_script(worker: &str) -> GuideScript {
    GuideScript {
        worker_id: worker.into(),
        transcript: e2e_transcript(),
        audio: e2e_audio(),
        chunk_size: 4096,
    }
}

fn raw_get(h: &Harness, path: &str) -> reqwest::blocking::Response {
    reqwest::blocking::get(format!("{}{path}", h.server.base_url())).unwrap()
}

#[test]
fn config_endpoint() {
    let h = Harness::new();
    let c = h.client.config(None).unwrap();
    assert_eq!(c.waveform_bins, 1024);
    assert_eq!(c.heartbeat_ms, 200);
    assert_eq!(c.restrict_movement, None);

    h.seed("seeds/house.json");
    let s = h.client.create_session("w1", TaskKind::Guide).unwrap();
    let c = h.client.config(Some(&s.session_id)).unwrap();
    assert_eq!(c.restrict_movement, Some(true));
    assert_eq!(
        h.client.config(Some("nope")).unwrap_err().status(),
        Some(404)
    );
}

#[test]
fn environment_assets() {
    let h = Harness::new();
    assert_eq!(
        h.client.graph("house").unwrap(),
        std::fs::read(fixture("envs/house/graph.json")).unwrap()
    );
    assert_eq!(h.client.graph("mars").unwrap_err().status(), Some(404));
    let (ct, bytes) = h.client.panorama("house", "lounge").unwrap();
    assert_eq!(ct, "image/png");
    assert_eq!(
        bytes,
        std::fs::read(fixture("envs/house/lounge.png")).unwrap()
    );
    assert_eq!(
        h.client.panorama("house", "attic").unwrap_err().status(),
        Some(404)
    );

    // A graph whose panorama blob never arrived.
    h.store
        .blob_put(
            &graph_key("bare"),
            br#"{"environment_id":"bare","nodes":[{"id":"x","position":[0,0,0],"panorama":"x.png"}],"edges":[]}"#,
        )
        .unwrap();
    let res = raw_get(&h, "/api/environments/bare/pano/x");
    assert_eq!(res.status().as_u16(), 404);
    let body: serde_json::Value = res.json().unwrap();
    assert!(
        body["message"].as_str().unwrap().contains("x.png"),
        "{body}"
    );
}

#[test]
fn racing_workers_one_task() {
    let h = Harness::new();
    h.seed("seeds/house.json");
    let base = h.server.base_url();
    let results: Vec<Option<u16>> = std::thread::scope(|s| {
        let hs: Vec<_> = ["w1", "w2"]
            .iter()
            .map(|w| {
                let c = Client::new(base.clone());
                s.spawn(move || {
                    c.create_session(w, TaskKind::Guide)
                        .err()
                        .map(|e| e.status().unwrap())
                })
            })
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut sorted = results.clone();
    sorted.sort();
    assert_eq!(sorted, [None, Some(409)], "{results:?}");
}

#[test]
fn create_session_status_codes() {
    let h = Harness::new();
    let url = format!("{}/api/sessions", h.server.base_url());
    let http = reqwest::blocking::Client::new();
    let res = http
        .post(&url)
        .json(&serde_json::json!({"worker_id": "w1", "kind": "guide"}))
        .send()
        .unwrap();
    assert_eq!(res.status().as_u16(), 409);
    let body: serde_json::Value = res.json().unwrap();
    assert_eq!(body["error"], "no_tasks");

    h.seed("seeds/house.json");
    let res = http
        .post(&url)
        .header("x-worker-id", "w7")
        .json(&serde_json::json!({"kind": "guide"}))
        .send()
        .unwrap();
    assert_eq!(res.status().as_u16(), 201);
    let body: serde_json::Value = res.json().unwrap();
    assert_eq!(body["state"], "created");
    assert_eq!(body["worker_id"], "w7");
    assert_eq!(
        body["task"]["payload"]["path"],
        serde_json::json!(["hall", "kitchen", "dining", "lounge"])
    );

    let res = http
        .post(&url)
        .body("{")
        .header("content-type", "application/json")
        .send()
        .unwrap();
    assert_eq!(res.status().as_u16(), 422);
    let body: serde_json::Value = res.json().unwrap();
    assert_eq!(body["error"], "unprocessable");
}

#[test]
fn event_sequence_over_http() {
    let h = Harness::new();
    h.seed("seeds/house.json");
    let id = h
        .client
        .create_session("w1", TaskKind::Guide)
        .unwrap()
        .session_id;
    h.client.start_recording(&id).unwrap();
    let p = |t, n: &str| Pose::new(t, n, 0.5, 0.0);
    assert_eq!(
        h.client
            .post_events(&id, 1, &[p(0, "hall")])
            .unwrap()
            .accepted_through_seq,
        1
    );
    assert_eq!(
        h.client
            .post_events(&id, 2, &[p(9, "kitchen")])
            .unwrap()
            .accepted_through_seq,
        2
    );
    assert_eq!(
        h.client
            .post_events(&id, 1, &[p(0, "hall")])
            .unwrap()
            .accepted_through_seq,
        2
    );
    let gap = h
        .client
        .post_events(&id, 4, &[p(20, "dining")])
        .unwrap_err();
    let api = gap.api().unwrap();
    assert_eq!((api.status, api.expected_seq), (409, Some(3)));
    let back = h.client.post_events(&id, 3, &[p(5, "dining")]).unwrap_err();
    assert_eq!(back.status(), Some(422));
    let off = h.client.post_events(&id, 3, &[p(20, "study")]).unwrap_err();
    assert_eq!(off.status(), Some(422));
    assert_eq!(h.client.session(&id).unwrap().next_event_seq, 3);
}

#[test]
fn replaying_any_prefix_is_harmless() {
    let batches: Vec<Vec<Pose>> = [
        ("hall", 0),
        ("hall", 40),
        ("kitchen", 90),
        ("dining", 120),
        ("lounge", 300),
    ]
    .iter()
    .map(|&(n, t)| vec![Pose::new(t, n, 1.0, 0.0), Pose::new(t + 5, n, 2.0, 0.1)])
    .collect();
    let run = |replay_prefix: Option<usize>| {
        let h = Harness::new();
        h.seed("seeds/house.json");
        let id = h
            .client
            .create_session("w1", TaskKind::Guide)
            .unwrap()
            .session_id;
        h.client.start_recording(&id).unwrap();
        for (i, b) in batches.iter().enumerate() {
            h.client.post_events(&id, i as u64 + 1, b).unwrap();
            if replay_prefix == Some(i) {
                for (j, old) in batches[..=i].iter().enumerate() {
                    h.client.post_events(&id, j as u64 + 1, old).unwrap();
                }
            }
        }
        let s = h
            .service
            .store()
            .get_doc::<pangea::server::Session>(&id)
            .unwrap();
        serde_json::to_string(&s.trace).unwrap()
    };
    let clean = run(None);
    for k in 0..batches.len() {
        assert_eq!(run(Some(k)), clean, "prefix {k}");
    }
}

#[test]
fn submit_waits_for_audio() {
    let h = Harness::new();
    h.seed("seeds/house.json");
    let id = h
        .client
        .create_session("w1", TaskKind::Guide)
        .unwrap()
        .session_id;
    h.client.start_recording(&id).unwrap();
    h.client.stop_recording(&id).unwrap();
    h.client.set_transcript(&id, "turn left").unwrap();
    let audio = e2e_audio();
    let (a, b) = audio.split_at(audio.len() / 2);
    h.client.upload_chunk(&id, 1, b).unwrap();

    let res = reqwest::blocking::Client::new()
        .post(format!("{}/api/sessions/{id}/submit", h.server.base_url()))
        .send()
        .unwrap();
    assert_eq!(res.status().as_u16(), 409);
    assert_eq!(res.headers()["retry-after"], "1");

    // The upload finishes while the client is already waiting to submit.
    let uploader = Client::new(h.server.base_url());
    let (id2, a2) = (id.clone(), a.to_vec());
    let t = std::thread::spawn(move || {
        std::thread::sleep(Duration::from_millis(300));
        uploader.upload_chunk(&id2, 0, &a2).unwrap();
        uploader.finalize_audio(&id2, 2).unwrap()
    });
    let done = h
        .client
        .submit_when_ready(&id, Duration::from_secs(10))
        .unwrap();
    let blob = t.join().unwrap();
    assert_eq!(done.state, SessionState::Completed);
    let doc: AnnotationDoc = h.store.get_doc(&done.annotation_id).unwrap();
    assert_eq!(doc.audio_ref.as_deref(), Some(blob.key.as_str()));
    assert_eq!(h.store.blob_get(&blob.key).unwrap(), audio);
}

#[test]
fn guide_then_follower() {
    let h = Harness::new();
    h.seed("seeds/house.json");
    let guide = run_guide(&h.client, &guide_script("guide-1")).unwrap();
    assert_eq!(
        guide.path,
        NavPath::new(["hall", "kitchen", "dining", "lounge"])
    );
    h.service.wait_for_alignment();

    let doc: AnnotationDoc = h.store.get_doc(&guide.annotation_id).unwrap();
    assert_eq!(doc.status, AnnotationStatus::Aligned);
    assert_eq!(doc.pose_trace.poses, guide.poses);
    assert_eq!(doc.transcript.as_deref(), Some(e2e_transcript().as_str()));
    let timed = doc.timed_transcript.unwrap();
    assert_eq!(timed.len(), 18);
    // "counter" was heard as "country" and still gets its word's slot.
    assert_eq!(timed.tokens()[4].token.text, "counter");
    assert_eq!(
        (timed.tokens()[4].start_ms, timed.tokens()[4].end_ms),
        (1600, 1900)
    );

    let follower = run_follower(
        &h.client,
        "follower-1",
        &["hall", "kitchen", "dining", "lounge"],
        Outcome::Done,
    )
    .unwrap();
    match &follower.instruction {
        InstructionBody::Audio(bytes) => assert_eq!(bytes, &e2e_audio()),
        other => panic!("{other:?}"),
    }
    let wf = follower.waveform.as_ref().unwrap();
    assert_eq!((wf.bins.len(), wf.duration_ms), (1024, 7200));
    assert_eq!(follower.path, guide.path);

    let report = h.client.dashboard(None).unwrap();
    let overall = report.overall.unwrap();
    assert_eq!(
        (
            overall.count,
            overall.success_rate,
            overall.ne_mean_m,
            overall.spl_mean
        ),
        (1, 1.0, 0.0, 1.0)
    );
    assert_eq!(report.workers["follower-1"].count, 1);
    assert!(h.client.dashboard(Some("demo")).unwrap().overall.is_none());

    let replay = h.client.replay(&guide.annotation_id).unwrap();
    let timed = replay.timed_transcript.unwrap();
    assert!(timed.is_sorted());
    let sync = replay.synchronization.unwrap();
    assert_eq!(sync.len(), 18);
    let freplay = h.client.replay(&follower.annotation_id).unwrap();
    assert_eq!(freplay.eval.unwrap().spl, 1.0);
    assert_eq!(freplay.timed_transcript.unwrap(), timed);
    assert!(freplay
        .pose_trace
        .poses
        .iter()
        .all(|p| p.audio_t_ms.is_some()));
    assert_eq!(h.client.replay("ann-404").unwrap_err().status(), Some(404));
}

#[test]
fn sessions_of_the_wrong_kind_are_conflicts() {
    let h = Harness::new();
    h.seed("seeds/house_mixed.json");
    let f = h
        .client
        .create_session("w1", TaskKind::Follower)
        .unwrap()
        .session_id;
    for res in [
        h.client.start_recording(&f).err(),
        h.client.set_transcript(&f, "x").err(),
        h.client.submit(&f).err(),
        h.client.upload_chunk(&f, 0, b"x").err(),
    ] {
        assert_eq!(res.unwrap().status(), Some(409));
    }
    assert_eq!(
        h.client.instruction(&f).unwrap(),
        InstructionBody::Text("Go to the lounge.".into())
    );
    assert_eq!(h.client.waveform(&f).unwrap_err().status(), Some(404));
    let g = h
        .client
        .create_session("w1", TaskKind::Guide)
        .unwrap()
        .session_id;
    assert_eq!(h.client.instruction(&g).unwrap_err().status(), Some(409));
    assert_eq!(
        h.client.complete(&g, Outcome::Done).unwrap_err().status(),
        Some(409)
    );
}

#[test]
fn exports_are_deterministic() {
    let export = || {
        let h = Harness::new();
        h.seed("seeds/house.json");
        run_guide(&h.client, &guide_script("guide-1")).unwrap();
        h.service.wait_for_alignment();
        run_follower(
            &h.client,
            "follower-1",
            &["hall", "kitchen", "dining"],
            Outcome::GaveUp,
        )
        .unwrap();
        let out = tempfile::tempdir().unwrap();
        let (path, n) = pangea::cli::export_annotations(&h.store, out.path()).unwrap();
        assert_eq!(n, 2);
        std::fs::read_to_string(path).unwrap()
    };
    let a = export();
    assert_eq!(a, export());
    let docs: Vec<AnnotationDoc> = a
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(docs[0].kind, TaskKind::Guide);
    assert_eq!(docs[1].outcome, Outcome::GaveUp);
}
