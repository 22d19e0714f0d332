#![cfg(feature = "live")]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use langscale::augment::{ChatMessage, ChatRequest, HttpTransport, SlotRequest, Transport, TransportError};

/// Serves one canned response per entry, returning the raw requests seen.
fn serve(responses: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let mut seen = Vec::new();
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" {
                    break;
                }
            }
            let mut payload = vec![0; len];
            reader.read_exact(&mut payload).unwrap();
            seen.push(head + &String::from_utf8(payload).unwrap());
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
        seen
    });
    (url, handle)
}

fn request() -> ChatRequest {
    ChatRequest {
        model: "gpt-4".into(),
        messages: vec![ChatMessage { role: "user".into(), content: "restate this".into() }],
        temperature: 1.0,
    }
}

fn call(t: &HttpTransport, req: &ChatRequest) -> Result<String, TransportError> {
    let hash = req.slot_hash(0);
    t.complete(&SlotRequest { request: req, source_text: "", slot: 0, hash: &hash })
}

#[test]
fn parses_completion_and_sends_key() {
    let body = r#"{"choices":[{"message":{"role":"assistant","content":"A restated text."}}]}"#;
    let (url, server) = serve(vec![(200, body.into())]);
    let t = HttpTransport::new(url, Some("sk-test".into()), Duration::from_secs(5)).unwrap();
    assert_eq!(call(&t, &request()).unwrap(), "A restated text.");
    let seen = server.join().unwrap();
    let raw = seen[0].to_ascii_lowercase();
    assert!(raw.starts_with("post /v1/chat/completions"));
    assert!(raw.contains("authorization: bearer sk-test"));
    assert!(seen[0].contains(r#""model":"gpt-4""#));
}

#[test]
fn classifies_status_codes() {
    let (url, server) = serve(vec![
        (429, "{}".into()),
        (503, "{}".into()),
        (400, "{}".into()),
        (200, r#"{"choices":[]}"#.into()),
    ]);
    let t = HttpTransport::new(url, None, Duration::from_secs(5)).unwrap();
    let req = request();
    assert!(call(&t, &req).unwrap_err().is_retryable());
    assert!(call(&t, &req).unwrap_err().is_retryable());
    assert!(matches!(call(&t, &req), Err(TransportError::Fatal(_))));
    assert!(matches!(call(&t, &req), Err(TransportError::Fatal(_))));
    let seen = server.join().unwrap();
    assert!(!seen[0].to_ascii_lowercase().contains("authorization"));
}

#[test]
fn connection_refused_is_retryable() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let t = HttpTransport::new(format!("http://127.0.0.1:{port}/"), None, Duration::from_secs(2)).unwrap();
    assert!(call(&t, &request()).unwrap_err().is_retryable());
}
