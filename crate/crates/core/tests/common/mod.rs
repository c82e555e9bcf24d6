#![allow(dead_code)]

pub mod oracle;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use pangea::align::{AutomaticTranscriber, MockTranscriber};
use pangea::client::Client;
use pangea::clock::{IdGenerator, ManualClock, SequentialIds};
use pangea::environment::ingest_environment;
use pangea::server::http::{self, ServerHandle};
use pangea::server::{AlignmentWorkers, RetryPolicy, Service, ServiceSettings};
use pangea::store::{MemoryBackend, Store};
use pangea::wav;

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(rel)
}

pub fn manual_store() -> (Store, Arc<ManualClock>) {
    let clock = Arc::new(ManualClock::epoch());
    (
        Store::new(Arc::new(MemoryBackend::default()), clock.clone()),
        clock,
    )
}

pub fn e2e_transcript() -> String {
    std::fs::read_to_string(fixture("e2e/transcript.txt"))
        .unwrap()
        .trim()
        .to_owned()
}

/// One 300 ms tone per transcript word, 100 ms apart, matching the word
/// times in `e2e/asr/default.jsonl`.
pub fn e2e_audio() -> Vec<u8> {
    wav::encode(&wav::synth_bursts(18, 300, 100, 16_000), 16_000)
}

pub fn e2e_asr() -> Arc<dyn AutomaticTranscriber> {
    Arc::new(MockTranscriber::fixture_dir(fixture("e2e/asr")))
}

pub const NO_BACKOFF: RetryPolicy = RetryPolicy {
    max_retries: 3,
    base_backoff: Duration::ZERO,
};

/// A server over an in-memory store with the house environment ingested,
/// deterministic ids and clock, and mock alignment.
/// Sequential ids under their own namespace, so seeded tasks never collide
/// with ids the service mints.
#[derive(Debug, Default)]
pub struct SeedIds(SequentialIds);

impl IdGenerator for SeedIds {
    fn next_id(&self, prefix: &str) -> String {
        self.0.next_id(&format!("seed-{prefix}"))
    }
}

pub struct Harness {
    pub store: Store,
    pub seed_ids: SeedIds,
    pub clock: Arc<ManualClock>,
    pub service: Arc<Service>,
    pub server: ServerHandle,
    pub client: Client,
}

impl Harness {
    pub fn new() -> Self {
        Self::with_asr(e2e_asr())
    }

    pub fn with_asr(asr: Arc<dyn AutomaticTranscriber>) -> Self {
        let (store, clock) = manual_store();
        ingest_environment(&store, &fixture("envs/house")).unwrap();
        let workers = AlignmentWorkers::start(store.clone(), asr, NO_BACKOFF, 2);
        let service = Arc::new(
            Service::new(
                store.clone(),
                Arc::new(SequentialIds::default()),
                ServiceSettings::default(),
            )
            .with_alignment(workers)
            .unwrap(),
        );
        let server = http::spawn(service.clone(), "127.0.0.1:0").unwrap();
        let client = Client::new(server.base_url());
        Harness {
            store,
            seed_ids: SeedIds::default(),
            clock,
            service,
            server,
            client,
        }
    }

    pub fn seed(&self, seed_file: &str) {
        let spec =
            serde_json::from_str(&std::fs::read_to_string(fixture(seed_file)).unwrap()).unwrap();
        self.seed_spec(&spec);
    }

    pub fn seed_spec(&self, spec: &pangea::cli::SeedSpec) {
        pangea::cli::seed_tasks(&self.store, &self.seed_ids, spec).unwrap();
    }
}
