use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use flowspace_core::llm::{ClientConfig, ClientError, CompletionClient, CompletionOptions, HttpClient};
use serde_json::{json, Value};

#[derive(Clone, Default)]
struct Seen {
    bodies: Arc<Mutex<Vec<Value>>>,
    auth: Arc<Mutex<Vec<Option<String>>>>,
}

async fn chat(State(seen): State<Seen>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let auth = headers.get("authorization").map(|v| v.to_str().unwrap().to_string());
    seen.auth.lock().unwrap().push(auth);
    seen.bodies.lock().unwrap().push(body.clone());
    let prompt = body["messages"][0]["content"].as_str().unwrap_or_default().to_string();
    match prompt.as_str() {
        "fail" => (StatusCode::TOO_MANY_REQUESTS, Json(json!({"error": "slow down"}))),
        "empty" => (StatusCode::OK, Json(json!({"choices": []}))),
        "no usage" => (StatusCode::OK, Json(json!({"choices": [{"message": {"content": "12345678"}}]}))),
        _ => (
            StatusCode::OK,
            Json(json!({
                "choices": [{"message": {"role": "assistant", "content": format!("echo: {prompt}")}}],
                "usage": {"prompt_tokens": 11, "completion_tokens": 7}
            })),
        ),
    }
}

async fn stub() -> (String, Seen) {
    let seen = Seen::default();
    let app = Router::new().route("/v1/chat/completions", post(chat)).with_state(seen.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (format!("http://{addr}/v1/"), seen)
}

fn client(base_url: String, api_key: Option<&str>) -> HttpClient {
    HttpClient::new(ClientConfig {
        base_url,
        api_key: api_key.map(str::to_string),
        model_id: "stub-model".into(),
        timeout_secs: 5,
    })
    .unwrap()
}

#[tokio::test]
async fn sends_chat_request_and_reads_usage() {
    let (url, seen) = stub().await;
    let c = client(url, Some("sk-test"));
    let options = CompletionOptions {
        model_id: String::new(),
        temperature: 0.3,
        max_tokens: 64,
        seed: Some(9),
    };
    let out = c.complete("hello", &options).await.unwrap();
    assert_eq!(out.text, "echo: hello");
    assert_eq!((out.tokens_in, out.tokens_out), (11, 7));

    let body = seen.bodies.lock().unwrap()[0].clone();
    assert_eq!(body["model"], "stub-model");
    assert_eq!(body["temperature"], 0.3);
    assert_eq!(body["max_tokens"], 64);
    assert_eq!(body["seed"], 9);
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(seen.auth.lock().unwrap()[0].as_deref(), Some("Bearer sk-test"));

    // Per-call model overrides the configured default.
    let options = CompletionOptions {
        model_id: "other".into(),
        seed: None,
        ..options
    };
    c.complete("again", &options).await.unwrap();
    let body = seen.bodies.lock().unwrap()[1].clone();
    assert_eq!(body["model"], "other");
    assert!(body.get("seed").is_none());
}

#[tokio::test]
async fn error_statuses_and_bad_bodies() {
    let (url, seen) = stub().await;
    let c = client(url, None);
    let options = CompletionOptions::default();
    match c.complete("fail", &options).await.unwrap_err() {
        ClientError::Status { status, body } => {
            assert_eq!(status, 429);
            assert!(body.contains("slow down"));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(c.complete("empty", &options).await, Err(ClientError::InvalidResponse(_))));
    // Missing usage falls back to the length estimate.
    let out = c.complete("no usage", &options).await.unwrap();
    assert_eq!((out.tokens_in, out.tokens_out), (2, 2));
    assert!(seen.auth.lock().unwrap().iter().all(Option::is_none));
}

#[tokio::test]
async fn unreachable_endpoint() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let c = client(format!("http://{addr}"), None);
    let err = c.complete("x", &CompletionOptions::default()).await.unwrap_err();
    assert!(matches!(err, ClientError::Unreachable(_)), "{err:?}");
}
