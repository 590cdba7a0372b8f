use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use iclcover_harness::client::{complete_prompts, CompletionClient, EndpointConfig};
use iclcover_harness::eval::{Prediction, PromptRecord};
use iclcover_harness::{io, HarnessError};

/// Serves one canned response per connection, in order, then stops.
/// Returns the endpoint url and a handle yielding the request bodies.
fn stub(responses: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/completions", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let mut bodies = Vec::new();
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut req = vec![0; len];
            reader.read_exact(&mut req).unwrap();
            bodies.push(String::from_utf8(req).unwrap());
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            reader.get_mut().write_all(reply.as_bytes()).unwrap();
        }
        bodies
    });
    (url, handle)
}

fn fast(url: &str) -> EndpointConfig {
    let mut cfg = EndpointConfig::new(url, "stub-model");
    cfg.initial_backoff = Duration::from_millis(5);
    cfg.timeout = Duration::from_secs(5);
    cfg
}

fn canned(text: &str) -> (u16, String) {
    (200, serde_json::json!({"choices": [{"text": text}]}).to_string())
}

#[test]
fn canned_completions_become_predictions() {
    let tmp = tempfile::tempdir().unwrap();
    let prompts = vec![
        PromptRecord {
            test_id: "t1".into(),
            prompt: "Sentence: a\nLogical Form:".into(),
            reference: "x".into(),
        },
        PromptRecord {
            test_id: "t2".into(),
            prompt: "Sentence: b\nLogical Form:".into(),
            reference: "y".into(),
        },
    ];
    let prompts_path = tmp.path().join("prompts.jsonl");
    io::write_jsonl(&prompts_path, &prompts).unwrap();
    let (url, server) = stub(vec![canned(" answer(a)"), canned(" answer(b)\n")]);
    let out = tmp.path().join("predictions.jsonl");
    assert_eq!(complete_prompts(&prompts_path, &out, fast(&url)).unwrap(), 2);
    let preds: Vec<Prediction> = io::read_jsonl(&out).unwrap();
    assert_eq!(preds[0].prediction, "answer(a)");
    assert_eq!(preds[1].test_id, "t2");
    let bodies = server.join().unwrap();
    let first: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
    assert_eq!(first["prompt"], "Sentence: a\nLogical Form:");
    assert_eq!(first["temperature"], 0.0);
    assert_eq!(first["model"], "stub-model");
}

#[test]
fn server_errors_are_retried() {
    let err = (500, "{}".to_string());
    let (url, server) = stub(vec![err.clone(), err.clone(), err, canned("ok")]);
    let client = CompletionClient::new(fast(&url)).unwrap();
    assert_eq!(client.complete("p").unwrap(), "ok");
    assert_eq!(server.join().unwrap().len(), 4);
}

#[test]
fn exhausted_retries_and_bad_payloads_are_errors() {
    let err = (503, "{}".to_string());
    let (url, server) = stub(vec![err.clone(), err]);
    let mut cfg = fast(&url);
    cfg.max_attempts = 2;
    let e = CompletionClient::new(cfg).unwrap().complete("p").unwrap_err();
    assert!(matches!(e, HarnessError::Transport { attempts: 2, .. }), "{e}");
    server.join().unwrap();

    let (url, server) = stub(vec![(200, "{\"choices\": []}".into())]);
    let e = CompletionClient::new(fast(&url)).unwrap().complete("p").unwrap_err();
    assert!(matches!(e, HarnessError::Response { .. }), "{e}");
    server.join().unwrap();

    let (url, server) = stub(vec![(400, "{\"error\": \"bad\"}".into())]);
    let e = CompletionClient::new(fast(&url)).unwrap().complete("p").unwrap_err();
    assert!(matches!(e, HarnessError::Transport { attempts: 1, .. }), "{e}");
    server.join().unwrap();
}

#[test]
fn unreachable_endpoint_is_named_in_the_error() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let url = format!("http://127.0.0.1:{port}/v1/completions");
    let mut cfg = fast(&url);
    cfg.max_attempts = 2;
    let e = CompletionClient::new(cfg).unwrap().complete("p").unwrap_err();
    assert!(matches!(e, HarnessError::Transport { .. }));
    assert!(e.to_string().contains(&url), "{e}");
}
