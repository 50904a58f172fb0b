//! The embedding client against a local stub of an OpenAI-style endpoint.
//! The stub answers in reverse index order, fails the first request of
//! each test once, and counts requests so the cache can be checked.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use entclust::corpus::{Corpus, Document};
use entclust::features::{fetch_embeddings, EmbedClientConfig, FeatureError};

/// Deterministic fake embedding of a text.
fn fake_embedding(text: &str) -> Vec<f64> {
    let words = text.split_whitespace().count() as f64;
    let bytes: u32 = text.bytes().map(u32::from).sum();
    vec![words, f64::from(bytes % 97), text.len() as f64]
}

struct Stub {
    url: String,
    served: Arc<AtomicUsize>,
}

/// `fail_first`: how many initial requests get a 500 answer.
fn start_stub(fail_first: usize) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let served = Arc::new(AtomicUsize::new(0));
    let seen = Arc::new(AtomicUsize::new(0));
    let served2 = Arc::clone(&served);
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        len = v.trim().parse().unwrap();
                    }
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let n = seen.fetch_add(1, Ordering::SeqCst);
            let (status, payload) = if n < fail_first {
                (
                    "500 Internal Server Error",
                    "{\"error\":\"try again\"}".to_string(),
                )
            } else {
                let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
                let inputs: Vec<&str> = req["input"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|v| v.as_str().unwrap())
                    .collect();
                let data: Vec<serde_json::Value> = inputs
                    .iter()
                    .enumerate()
                    .rev()
                    .map(|(i, t)| serde_json::json!({"index": i, "embedding": fake_embedding(t)}))
                    .collect();
                served2.fetch_add(1, Ordering::SeqCst);
                ("200 OK", serde_json::json!({ "data": data }).to_string())
            };
            let _ = write!(
                stream,
                "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            );
        }
    });
    Stub { url, served }
}

fn corpus() -> Corpus {
    let texts = [
        "alpha beta",
        "gamma delta epsilon",
        "one",
        "this document is far too long for the limit set below",
        "zeta eta",
        "theta",
        "iota kappa lambda mu",
    ];
    Corpus::from_documents(
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document::new(format!("d{i}"), *t, None))
            .collect(),
    )
    .unwrap()
}

fn config(url: &str) -> EmbedClientConfig {
    EmbedClientConfig {
        base_url: url.to_owned(),
        api_key_env: None,
        max_tokens_per_doc: 5,
        batch_size: 2,
        backoff_ms: 1,
        parallel_requests: 2,
        timeout_secs: 10,
        ..EmbedClientConfig::default()
    }
}

#[test]
fn rows_follow_corpus_order_despite_permuted_responses() {
    let stub = start_stub(1);
    let c = corpus();
    let out = fetch_embeddings(&c, &config(&stub.url)).unwrap();
    assert_eq!(out.excluded, vec!["d3".to_string()]);
    assert_eq!(out.matrix.n(), 6);
    assert_eq!(out.requests, 3);
    for (i, id) in out.matrix.ids().iter().enumerate() {
        let doc = &c.docs()[c.position(id).unwrap()];
        let row: Vec<f64> = out.matrix.values().row(i).iter().copied().collect();
        assert_eq!(row, fake_embedding(&doc.text), "row for {id}");
    }
}

#[test]
fn cache_avoids_repeat_requests() {
    let stub = start_stub(0);
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(&stub.url);
    cfg.cache_path = Some(dir.path().join("cache.jsonl"));
    let first = fetch_embeddings(&corpus(), &cfg).unwrap();
    let after_first = stub.served.load(Ordering::SeqCst);
    assert_eq!(after_first, 3);
    let second = fetch_embeddings(&corpus(), &cfg).unwrap();
    assert_eq!(second.requests, 0);
    assert_eq!(stub.served.load(Ordering::SeqCst), after_first);
    assert_eq!(first.matrix.values(), second.matrix.values());
    assert_eq!(first.matrix.ids(), second.matrix.ids());
}

#[test]
fn persistent_failure_reports_attempts() {
    let stub = start_stub(usize::MAX);
    let mut cfg = config(&stub.url);
    cfg.max_attempts = 2;
    cfg.parallel_requests = 1;
    match fetch_embeddings(&corpus(), &cfg) {
        Err(FeatureError::Http { attempts, .. }) => assert_eq!(attempts, 2),
        other => panic!("expected an HTTP error, got {other:?}"),
    }
}

#[test]
fn missing_api_key_is_a_config_error() {
    let mut cfg = config("http://127.0.0.1:9");
    cfg.api_key_env = Some("ENTCLUST_TEST_KEY_THAT_IS_NOT_SET".into());
    assert!(matches!(
        fetch_embeddings(&corpus(), &cfg),
        Err(FeatureError::ApiKeyMissing(_))
    ));
}
