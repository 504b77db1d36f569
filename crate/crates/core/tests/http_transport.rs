//! Exercises the live HTTP transport against a minimal local
//! chat-completions server; no external network involved.

use collider_core::harness::{execute_query, HttpTransport, QueryRequest, TranscriptStore};
use std::io::{Read, Write};
use std::net::TcpListener;
use std::time::Duration;

/// Serve `n` chat-completion responses on an ephemeral port.
fn spawn_server(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let handle = std::thread::spawn(move || {
        let mut seen = Vec::new();
        for (status, body) in responses {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = vec![0u8; 65536];
            let mut total = 0;
            // Read until the end of the JSON body (requests are small and
            // sent in one piece by the client).
            loop {
                let n = stream.read(&mut buf[total..]).unwrap();
                total += n;
                let text = String::from_utf8_lossy(&buf[..total]);
                if let Some(split) = text.find("\r\n\r\n") {
                    let headers = &text[..split];
                    let content_length = headers
                        .lines()
                        .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()))
                        .unwrap_or(0);
                    if text[split + 4..].len() >= content_length {
                        seen.push(text[split + 4..].to_string());
                        break;
                    }
                }
            }
            let reason = if status == 200 { "OK" } else { "Too Many Requests" };
            let reply = format!(
                "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
        seen
    });
    (format!("http://{addr}"), handle)
}

fn completion_body(content: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": content}}]
    })
    .to_string()
}

#[test]
fn live_transport_round_trip_and_store_append() {
    let (base, server) = spawn_server(vec![(200, completion_body("73"))]);
    std::env::set_var("LOCALTEST_BASE_URL", &base);
    std::env::set_var("LOCALTEST_API_KEY", "test-key");

    let dir = tempfile::tempdir().unwrap();
    let store = TranscriptStore::open(dir.path()).unwrap();
    let mut request = QueryRequest::new("localtest", "tiny-model", 0.0, "How likely is rain?");
    request.timeout = Duration::from_secs(5);
    let transport = HttpTransport::new().unwrap();

    let entry = execute_query(&request, &transport, Some(&store)).unwrap();
    assert_eq!(entry.raw_response, "73");
    assert_eq!(entry.parsed_value, Some(73.0));
    assert!(store.get(&request.request_hash()).unwrap().is_some());

    let bodies = server.join().unwrap();
    assert_eq!(bodies.len(), 1);
    let sent: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
    assert_eq!(sent["model"], "tiny-model");
    assert_eq!(sent["temperature"], 0.0);
    assert_eq!(sent["messages"][0]["content"], "How likely is rain?");
}

#[test]
fn rate_limits_are_retried() {
    let (base, server) = spawn_server(vec![
        (429, "{}".to_string()),
        (200, completion_body("41")),
    ]);
    std::env::set_var("RETRYTEST_BASE_URL", &base);
    std::env::set_var("RETRYTEST_API_KEY", "test-key");

    let mut request = QueryRequest::new("retrytest", "tiny-model", 0.0, "again?");
    request.timeout = Duration::from_secs(5);
    request.retry_backoff = Duration::ZERO;
    let transport = HttpTransport::new().unwrap();

    let entry = execute_query(&request, &transport, None).unwrap();
    assert_eq!(entry.parsed_value, Some(41.0));
    assert_eq!(server.join().unwrap().len(), 2);
}

#[test]
fn missing_environment_is_a_transport_failure() {
    let request = QueryRequest::new("unconfigured-provider", "m", 0.0, "p");
    let transport = HttpTransport::new().unwrap();
    let err = execute_query(&request, &transport, None).unwrap_err();
    assert!(err.to_string().contains("UNCONFIGURED_PROVIDER_BASE_URL"));
}
