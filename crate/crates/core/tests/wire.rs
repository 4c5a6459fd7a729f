use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use clirkit::oracle::{Candidate, ComparatorOracle, OracleEndpoint, OracleFailure, WireOracle};
use clirkit::Error;

/// Serves one canned reply per connection, in order, and records request bodies.
fn stub(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>, JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    let handle = std::thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(String::from_utf8(buf).unwrap());
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, seen, handle)
}

fn endpoint(url: &str, env: &str, retries: u32) -> OracleEndpoint {
    std::env::set_var(env, "secret-token");
    OracleEndpoint {
        auth_token_env: env.into(),
        max_retries: retries,
        backoff_base_ms: 5,
        timeout_secs: 5.0,
        ..OracleEndpoint::new(url)
    }
}

fn three() -> Vec<Candidate<'static>> {
    ["alpha", "beta", "gamma"].iter().map(|t| Candidate { id: t, text: t }).collect()
}

#[test]
fn bracketed_answer_is_zero_based() {
    let (url, seen, h) = stub(vec![(200, r#"{"text":"[1]"}"#.into())]);
    let oracle = WireOracle::new(endpoint(&url, "WIRE_TEST_TOKEN_A", 0)).unwrap();
    assert_eq!(oracle.best_of("t", "d", &three()), Ok(0));
    h.join().unwrap();
    let body: serde_json::Value = serde_json::from_str(&seen.lock().unwrap()[0]).unwrap();
    assert!(body["prompt"].as_str().unwrap().contains("[3] gamma"));
    assert!(body["system"].is_string());
}

#[test]
fn garbage_answer_is_a_failure_without_retry() {
    let (url, _, h) = stub(vec![(200, r#"{"text":"the second one"}"#.into())]);
    let oracle = WireOracle::new(endpoint(&url, "WIRE_TEST_TOKEN_B", 1)).unwrap();
    assert!(matches!(oracle.best_of("t", "d", &three()), Err(OracleFailure::Unparseable(_))));
    assert_eq!(oracle.attempts(), 1);
    h.join().unwrap();
}

#[test]
fn server_errors_are_retried() {
    let (url, _, h) = stub(vec![(503, "{}".into()), (200, r#"{"text":"[3]"}"#.into())]);
    let oracle = WireOracle::new(endpoint(&url, "WIRE_TEST_TOKEN_C", 1)).unwrap();
    assert_eq!(oracle.best_of("t", "d", &three()), Ok(2));
    assert_eq!(oracle.attempts(), 2);
    h.join().unwrap();
}

#[test]
fn client_errors_are_not_retried() {
    let (url, _, h) = stub(vec![(401, "{}".into())]);
    let oracle = WireOracle::new(endpoint(&url, "WIRE_TEST_TOKEN_D", 3)).unwrap();
    assert_eq!(oracle.best_of("t", "d", &three()), Err(OracleFailure::Status(401)));
    assert_eq!(oracle.attempts(), 1);
    h.join().unwrap();
}

#[test]
fn unreachable_endpoint_exhausts_retries() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let oracle = WireOracle::new(endpoint(&format!("http://127.0.0.1:{port}"), "WIRE_TEST_TOKEN_E", 2)).unwrap();
    assert!(matches!(oracle.best_of("t", "d", &three()), Err(OracleFailure::Transport(_))));
    assert_eq!(oracle.attempts(), 3);
}

#[test]
fn missing_token_fails_before_any_request() {
    let e = OracleEndpoint {
        auth_token_env: "WIRE_TEST_TOKEN_UNSET".into(),
        ..OracleEndpoint::new("http://127.0.0.1:9")
    };
    assert!(matches!(WireOracle::new(e), Err(Error::Config(_))));
}
