use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use hpct_core::llm::{CompletionClient, CompletionRequest, HttpClient, LlmConfig, LlmError, ScriptedMock};

/// Serves canned `(status, body)` replies in order, one per connection, and
/// records the raw requests.
fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in replies {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream);
            let mut head = String::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
                head.push_str(&line);
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).ok();
            log.lock().unwrap().push(format!("{head}\r\n{}", String::from_utf8_lossy(&buf)));
            let mut stream = reader.into_inner();
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).ok();
        }
    });
    (format!("http://{addr}/v1/chat/completions"), seen)
}

fn config(endpoint: String) -> LlmConfig {
    LlmConfig {
        endpoint,
        model: "m".into(),
        api_key_env: "HPCT_TEST_TOKEN_UNSET_42".into(),
        timeout_seconds: 5.0,
        max_retries: 3,
        backoff_base_ms: 1,
        max_concurrency: 1,
    }
}

fn req(n: usize) -> CompletionRequest {
    CompletionRequest {
        system: "sys".into(),
        user: "usr".into(),
        temperature: 0.2,
        n,
        max_tokens: 64,
    }
}

fn choices(texts: &[&str]) -> String {
    let c: Vec<_> = texts.iter().map(|t| serde_json::json!({"message": {"content": t}})).collect();
    serde_json::json!({ "choices": c }).to_string()
}

#[test]
fn server_errors_are_retried() {
    let (url, seen) = serve(vec![
        (500, "{}".into()),
        (503, "{}".into()),
        (200, choices(&["a", "b"])),
    ]);
    let client = HttpClient::without_token(config(url)).unwrap();
    assert_eq!(client.complete(&req(2)).unwrap(), vec!["a", "b"]);
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    let body = seen[2].split("\r\n\r\n").nth(1).unwrap();
    let v: serde_json::Value = serde_json::from_str(body).unwrap();
    assert_eq!(v["n"], 2);
    assert_eq!(v["model"], "m");
    assert_eq!(v["messages"][1]["content"], "usr");
}

#[test]
fn retries_give_up_after_the_budget() {
    let (url, seen) = serve(vec![(500, "{}".into()); 4]);
    let client = HttpClient::without_token(config(url)).unwrap();
    assert!(matches!(client.complete(&req(1)), Err(LlmError::Unreachable(_))));
    assert_eq!(seen.lock().unwrap().len(), 4);
}

#[test]
fn auth_failure_is_not_retried() {
    let (url, seen) = serve(vec![(401, "{}".into()), (200, choices(&["x"]))]);
    let client = HttpClient::without_token(config(url)).unwrap();
    assert_eq!(client.complete(&req(1)), Err(LlmError::AuthFailed));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn servers_ignoring_n_are_topped_up() {
    let (url, seen) = serve(vec![(200, choices(&["a"])), (200, choices(&["b", "c"]))]);
    let client = HttpClient::without_token(config(url)).unwrap();
    assert_eq!(client.complete(&req(3)).unwrap(), vec!["a", "b", "c"]);
    assert_eq!(seen.lock().unwrap().len(), 2);
}

#[test]
fn malformed_reply_is_a_bad_response() {
    let (url, _) = serve(vec![(200, "not json".into())]);
    let client = HttpClient::without_token(config(url)).unwrap();
    assert!(matches!(client.complete(&req(1)), Err(LlmError::BadResponse(_))));
}

#[test]
fn missing_token_is_reported_by_name() {
    let err = HttpClient::new(config("http://127.0.0.1:9/".into())).err().unwrap();
    assert_eq!(err, LlmError::MissingToken("HPCT_TEST_TOKEN_UNSET_42".into()));
}

#[test]
fn unreachable_endpoint() {
    // bind then drop to get a port nobody listens on
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut c = config(format!("http://127.0.0.1:{port}/"));
    c.max_retries = 1;
    let client = HttpClient::without_token(c).unwrap();
    assert!(matches!(client.complete(&req(1)), Err(LlmError::Unreachable(_))));
}

#[test]
fn mock_script_forms() {
    let plain = ScriptedMock::from_json(r#"["a", "b"]"#).unwrap();
    assert_eq!(plain.complete(&req(2)).unwrap(), vec!["a", "b"]);
    assert!(plain.complete(&req(1)).is_err());
    let cyc = ScriptedMock::from_json(r#"{"cycle": true, "responses": ["z"]}"#).unwrap();
    assert_eq!(cyc.complete(&req(3)).unwrap(), vec!["z", "z", "z"]);
    assert_eq!(cyc.calls(), 1);
    assert!(ScriptedMock::from_json("{}").is_err());
}
