//! The provider client against a scripted local HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use ragtuner::provider::{chat_completion, embed_remote, ChatMessage, EndpointConfig, ProviderError};
use serde_json::{json, Value};

struct Request {
    path: String,
    authorization: Option<String>,
    body: Value,
}

fn read_request(stream: &mut TcpStream) -> Request {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    reader.read_line(&mut line).unwrap();
    let path = line.split_whitespace().nth(1).unwrap_or_default().to_string();
    let (mut length, mut authorization) = (0, None);
    loop {
        let mut header = String::new();
        reader.read_line(&mut header).unwrap();
        let header = header.trim_end();
        if header.is_empty() {
            break;
        }
        let (name, value) = header.split_once(':').unwrap();
        match name.to_ascii_lowercase().as_str() {
            "content-length" => length = value.trim().parse().unwrap(),
            "authorization" => authorization = Some(value.trim().to_string()),
            _ => {}
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).unwrap();
    Request { path, authorization, body: serde_json::from_slice(&body).unwrap_or(Value::Null) }
}

fn respond(stream: &mut TcpStream, status: u16, body: &str) {
    let reply = format!(
        "HTTP/1.1 {status} Scripted\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(reply.as_bytes()).unwrap();
}

/// Serves requests on a background thread. `script` maps the request number
/// and the request to a status and body.
fn serve<F>(script: F) -> (String, Arc<Mutex<Vec<Request>>>)
where
    F: Fn(usize, &Request) -> (u16, String) + Send + Sync + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let log = Arc::new(Mutex::new(Vec::new()));
    let seen = Arc::clone(&log);
    let script = Arc::new(script);
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let mut stream = stream.unwrap();
            let (seen, script) = (Arc::clone(&seen), Arc::clone(&script));
            std::thread::spawn(move || {
                let req = read_request(&mut stream);
                let n = {
                    let mut seen = seen.lock().unwrap();
                    seen.push(Request { path: req.path.clone(), authorization: req.authorization.clone(), body: req.body.clone() });
                    seen.len() - 1
                };
                let (status, body) = script(n, &req);
                respond(&mut stream, status, &body);
            });
        }
    });
    (url, log)
}

fn config(url: &str) -> EndpointConfig {
    EndpointConfig { backoff: Duration::from_millis(5), ..EndpointConfig::new(url, "secret", "test-model") }
}

fn chat_reply(text: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

#[test]
fn server_errors_are_retried_until_success() {
    let (url, log) = serve(|n, _| if n < 2 { (500, "busy".into()) } else { (200, chat_reply("Paris")) });
    let answer = chat_completion(&[ChatMessage::user("Where?")], &config(&url)).unwrap();
    assert_eq!(answer, "Paris");
    let log = log.lock().unwrap();
    assert_eq!(log.len(), 3);
    assert!(log.iter().all(|r| r.path == "/v1/chat/completions"));
    assert_eq!(log[0].authorization.as_deref(), Some("Bearer secret"));
    assert_eq!(log[0].body["model"], "test-model");
    assert_eq!(log[0].body["temperature"], 0);
}

#[test]
fn rate_limiting_is_retried() {
    let (url, log) = serve(|n, _| if n == 0 { (429, "slow down".into()) } else { (200, chat_reply("ok")) });
    assert_eq!(chat_completion(&[ChatMessage::user("hi")], &config(&url)).unwrap(), "ok");
    assert_eq!(log.lock().unwrap().len(), 2);
}

#[test]
fn persistent_failure_gives_up_after_three_attempts() {
    let (url, log) = serve(|_, _| (503, "down".into()));
    let err = chat_completion(&[ChatMessage::user("hi")], &config(&url)).unwrap_err();
    assert_eq!(err, ProviderError::Http { status: 503, body: "down".into() });
    assert_eq!(log.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, log) = serve(|_, _| (400, "bad request".into()));
    let err = chat_completion(&[ChatMessage::user("hi")], &config(&url)).unwrap_err();
    assert!(matches!(err, ProviderError::Http { status: 400, .. }));
    assert_eq!(log.lock().unwrap().len(), 1);
}

#[test]
fn embeddings_keep_input_order_across_concurrent_batches() {
    // each vector encodes its input; items come back reversed with indices
    let (url, log) = serve(|_, req| {
        let inputs = req.body["input"].as_array().unwrap().clone();
        let data: Vec<Value> = inputs
            .iter()
            .enumerate()
            .rev()
            .map(|(i, t)| {
                let n: f64 = t.as_str().unwrap().trim_start_matches("text ").parse().unwrap();
                json!({"index": i, "embedding": [n, 1.0]})
            })
            .collect();
        std::thread::sleep(Duration::from_millis(if inputs.len() % 2 == 0 { 20 } else { 1 }));
        (200, json!({"data": data}).to_string())
    });
    let texts: Vec<String> = (0..23).map(|i| format!("text {i}")).collect();
    let cfg = EndpointConfig { batch_size: 4, max_in_flight: 3, ..config(&url) };
    let vectors = embed_remote(&texts, &cfg).unwrap();
    assert_eq!(vectors.len(), 23);
    for (i, v) in vectors.iter().enumerate() {
        assert_eq!(v, &vec![i as f64, 1.0]);
    }
    let log = log.lock().unwrap();
    assert_eq!(log.len(), 6);
    assert!(log.iter().all(|r| r.path == "/v1/embeddings"));
}

#[test]
fn short_embedding_response_is_malformed() {
    let (url, _) = serve(|_, _| (200, json!({"data": [{"index": 0, "embedding": [1.0]}]}).to_string()));
    let err = embed_remote(&["a".into(), "b".into()], &config(&url)).unwrap_err();
    assert!(matches!(err, ProviderError::Malformed(_)));
}
