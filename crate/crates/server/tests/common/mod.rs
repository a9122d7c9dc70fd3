#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::http::{HeaderMap, Method, Request, StatusCode};
use axum::Router;
use flowspace_core::generator::GenerationOptions;
use flowspace_core::llm::MockClient;
use flowspace_server::{router, AppState};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub const DEMO_FIXTURE: &str = include_str!("../../fixtures/demo-mock.json");

pub fn demo_state() -> AppState {
    AppState::new(Arc::new(MockClient::from_json(DEMO_FIXTURE).unwrap()), GenerationOptions::default())
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Bytes,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<&str>) -> Reply {
    let request = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty))
        .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let headers = response.headers().clone();
    let body = response.into_body().collect().await.unwrap().to_bytes();
    Reply { status, headers, body }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    call(app, Method::GET, uri, None).await
}

pub async fn post(app: &Router, uri: &str, body: &str) -> Reply {
    call(app, Method::POST, uri, Some(body)).await
}

pub fn app(state: AppState) -> (Router, Arc<AppState>) {
    let state = Arc::new(state);
    (router(state.clone()), state)
}

/// Polls `/runs/{id}` until the run reaches a terminal state.
pub async fn wait_for_run(app: &Router, run_id: &str) -> Value {
    for _ in 0..500 {
        let status = get(app, &format!("/runs/{run_id}")).await.json();
        if matches!(status["state"].as_str(), Some("done" | "failed" | "aborted")) {
            return status;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    panic!("run {run_id} did not finish");
}
