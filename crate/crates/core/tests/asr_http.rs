//! `HttpTranscriber` against a stub recognizer.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use pangea::align::{AsrError, AutomaticTranscriber, HttpTranscriber};
use pangea::wav;
use serde_json::json;

#[derive(Default)]
struct Stub {
    in_flight: AtomicUsize,
    peak: AtomicUsize,
}

async fn recognize(
    State(stub): State<Arc<Stub>>,
    headers: HeaderMap,
    body: Bytes,
) -> (StatusCode, Json<serde_json::Value>) {
    let now = stub.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    stub.peak.fetch_max(now, Ordering::SeqCst);
    tokio::time::sleep(Duration::from_millis(50)).await;
    stub.in_flight.fetch_sub(1, Ordering::SeqCst);

    let has = |k: &str, v: &str| headers.get(k).is_some_and(|h| h == v);
    let ok = has("content-type", "audio/wav")
        && has("x-sample-rate-hz", "8000")
        && has("authorization", "Bearer s3cret")
        && wav::decode(&body).is_ok();
    if !ok {
        return (
            StatusCode::BAD_REQUEST,
            Json(json!({"error": "bad request"})),
        );
    }
    (
        StatusCode::OK,
        Json(json!({"words": [
            {"word": "Left,", "start_ms": 300, "end_ms": 500},
            {"word": "turn", "start_ms": 0, "end_ms": 250}
        ]})),
    )
}

fn serve(router: Router) -> String {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        tokio::runtime::Runtime::new()
            .unwrap()
            .block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).unwrap();
                axum::serve(listener, router).await.unwrap();
            })
    });
    format!("http://{addr}")
}

fn stub() -> (String, Arc<Stub>) {
    let state = Arc::new(Stub::default());
    let router = Router::new()
        .route("/recognize", post(recognize))
        .route(
            "/busy",
            post(|| async { (StatusCode::SERVICE_UNAVAILABLE, "overloaded") }),
        )
        .route(
            "/limited",
            post(|| async { (StatusCode::TOO_MANY_REQUESTS, "slow down") }),
        )
        .route("/garbage", post(|| async { "not json" }))
        .with_state(state.clone());
    (serve(router), state)
}

fn audio() -> Vec<u8> {
    wav::encode(&[0; 800], 8000)
}

#[test]
fn recognizes_and_normalizes() {
    let (base, _) = stub();
    let asr = HttpTranscriber::new(format!("{base}/recognize"), Some("s3cret".into()), 2);
    let toks = asr.transcribe(&audio()).unwrap();
    let got: Vec<(&str, u64, u64)> = toks
        .iter()
        .map(|t| (t.text(), t.start_ms, t.end_ms))
        .collect();
    assert_eq!(got, [("turn", 0, 250), ("left", 300, 500)]);
}

#[test]
fn classifies_failures() {
    let (base, _) = stub();
    let call = |path: &str, token: Option<&str>| {
        HttpTranscriber::new(format!("{base}{path}"), token.map(str::to_owned), 1)
            .transcribe(&audio())
            .unwrap_err()
    };
    let e = call("/recognize", None);
    assert!(matches!(e, AsrError::Rejected { status: 400, .. }), "{e}");
    assert!(!e.is_transient());
    assert!(call("/busy", None).is_transient());
    assert!(call("/limited", None).is_transient());
    assert!(matches!(call("/garbage", None), AsrError::Malformed(_)));

    let dead = HttpTranscriber::new("http://127.0.0.1:9/recognize", None, 1);
    let e = dead.transcribe(&audio()).unwrap_err();
    assert!(e.is_transient(), "{e}");
}

#[test]
fn bounds_requests_in_flight() {
    let (base, stub) = stub();
    let asr = Arc::new(HttpTranscriber::new(
        format!("{base}/recognize"),
        Some("s3cret".into()),
        2,
    ));
    std::thread::scope(|s| {
        for _ in 0..8 {
            let asr = asr.clone();
            s.spawn(move || asr.transcribe(&audio()).unwrap());
        }
    });
    assert_eq!(stub.peak.load(Ordering::SeqCst), 2);
}
