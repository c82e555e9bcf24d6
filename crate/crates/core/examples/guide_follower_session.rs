//! A full round over HTTP: a scripted guide records and submits an
//! instruction, alignment runs, a scripted follower walks it, and the
//! dashboard reports the result.

use std::path::Path;
use std::sync::Arc;

use pangea::align::MockTranscriber;
use pangea::cli::{seed_tasks, SeedSpec};
use pangea::client::Client;
use pangea::clock::UuidIds;
use pangea::environment::ingest_environment;
use pangea::scripted::{run_follower, run_guide, GuideScript};
use pangea::server::{http, AlignmentWorkers, RetryPolicy, Service, ServiceSettings};
use pangea::store::{AnnotationDoc, Outcome, Store};
use pangea::wav;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let store = Store::in_memory();
    println!(
        "{}",
        ingest_environment(&store, &fixtures.join("envs/house"))?
    );
    let spec: SeedSpec =
        serde_json::from_slice(&std::fs::read(fixtures.join("seeds/house.json"))?)?;
    seed_tasks(&store, &UuidIds, &spec).map_err(|e| e.join("; "))?;

    let asr = Arc::new(MockTranscriber::fixture_dir(fixtures.join("e2e/asr")));
    let workers = AlignmentWorkers::start(store.clone(), asr, RetryPolicy::default(), 2);
    let service = Arc::new(
        Service::new(store.clone(), Arc::new(UuidIds), ServiceSettings::default())
            .with_alignment(workers)?,
    );
    let server = http::spawn(service.clone(), "127.0.0.1:0")?;
    let client = Client::new(server.base_url());
    println!("server at {}", server.base_url());

    let script = GuideScript {
        worker_id: "guide-1".into(),
        transcript: std::fs::read_to_string(fixtures.join("e2e/transcript.txt"))?
            .trim()
            .into(),
        audio: wav::encode(&wav::synth_bursts(18, 300, 100, 16_000), 16_000),
        chunk_size: 16 * 1024,
    };
    let guide = run_guide(&client, &script)?;
    println!(
        "guide walked {} and submitted {}",
        guide.path, guide.annotation_id
    );
    service.wait_for_alignment();
    let doc: AnnotationDoc = store.get_doc(&guide.annotation_id)?;
    println!("alignment: {:?}", doc.status);

    let follower = run_follower(
        &client,
        "follower-1",
        &["hall", "kitchen", "study", "lounge"],
        Outcome::Done,
    )?;
    println!("follower walked {}", follower.path);
    let report = client.dashboard(Some("house"))?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
