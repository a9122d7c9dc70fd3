//! Completion clients.
//!
//! [`CompletionClient`] is the only way the engine talks to a language
//! model. Two implementations ship: [`HttpClient`] for OpenAI-compatible
//! endpoints and [`MockClient`], a scripted, network-free client used by
//! tests and offline demos.

use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionOptions {
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for CompletionOptions {
    fn default() -> Self {
        Self {
            model_id: DEFAULT_MODEL.to_string(),
            temperature: crate::ir::DEFAULT_TEMPERATURE,
            max_tokens: 2048,
            seed: None,
        }
    }
}

pub const DEFAULT_MODEL: &str = "gpt-4o";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub tokens_in: u64,
    pub tokens_out: u64,
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("completion endpoint unreachable: {0}")]
    Unreachable(String),
    #[error("completion endpoint returned {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    InvalidResponse(String),
    #[error("completion timed out")]
    Timeout,
    #[error("mock client has no reply for this prompt")]
    NoReply,
}

#[async_trait]
pub trait CompletionClient: Send + Sync {
    async fn complete(&self, prompt: &str, options: &CompletionOptions) -> Result<Completion, ClientError>;
}

/// Rough token count used wherever the backend reports none.
pub fn approximate_tokens(text: &str) -> u64 {
    (text.len() as u64).div_ceil(4)
}

/// Connection settings for [`HttpClient`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientConfig {
    pub base_url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key: Option<String>,
    #[serde(default = "default_model")]
    pub model_id: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_model() -> String {
    DEFAULT_MODEL.to_string()
}

fn default_timeout() -> u64 {
    120
}

impl ClientConfig {
    /// Reads `FLOWSPACE_LLM_BASE_URL`, `FLOWSPACE_LLM_API_KEY` (falling back to
    /// `OPENAI_API_KEY`), `FLOWSPACE_LLM_MODEL` and `FLOWSPACE_LLM_TIMEOUT`.
    /// Returns `None` when no base URL is set.
    pub fn from_env() -> Option<Self> {
        let base_url = std::env::var("FLOWSPACE_LLM_BASE_URL").ok()?;
        Some(Self {
            base_url,
            api_key: std::env::var("FLOWSPACE_LLM_API_KEY")
                .or_else(|_| std::env::var("OPENAI_API_KEY"))
                .ok(),
            model_id: std::env::var("FLOWSPACE_LLM_MODEL").unwrap_or_else(|_| default_model()),
            timeout_secs: std::env::var("FLOWSPACE_LLM_TIMEOUT")
                .ok()
                .and_then(|v| v.parse().ok())
                .unwrap_or_else(default_timeout),
        })
    }
}

/// Client for any endpoint implementing the OpenAI chat-completions API.
pub struct HttpClient {
    http: reqwest::Client,
    config: ClientConfig,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

impl HttpClient {
    pub fn new(config: ClientConfig) -> Result<Self, ClientError> {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ClientError::Unreachable(e.to_string()))?;
        Ok(Self { http, config })
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }
}

#[async_trait]
impl CompletionClient for HttpClient {
    async fn complete(&self, prompt: &str, options: &CompletionOptions) -> Result<Completion, ClientError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let model = if options.model_id.is_empty() {
            self.config.model_id.as_str()
        } else {
            options.model_id.as_str()
        };
        let body = ChatRequest {
            model,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: options.temperature,
            max_tokens: options.max_tokens,
            seed: options.seed,
        };
        let mut request = self.http.post(url).json(&body);
        if let Some(key) = &self.config.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().await.map_err(|e| {
            if e.is_timeout() {
                ClientError::Timeout
            } else {
                ClientError::Unreachable(e.to_string())
            }
        })?;
        let status = response.status();
        if !status.is_success() {
            let body = response.text().await.unwrap_or_default();
            return Err(ClientError::Status {
                status: status.as_u16(),
                body,
            });
        }
        let parsed: ChatResponse = response
            .json()
            .await
            .map_err(|e| ClientError::InvalidResponse(e.to_string()))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ClientError::InvalidResponse("no choices".into()))?;
        let (tokens_in, tokens_out) = match parsed.usage {
            Some(u) => (u.prompt_tokens, u.completion_tokens),
            None => (approximate_tokens(prompt), approximate_tokens(&text)),
        };
        Ok(Completion {
            text,
            tokens_in,
            tokens_out,
        })
    }
}

/// A reply rule: fires when the prompt contains every listed substring.
/// Replies are handed out in order; the last one repeats.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    pub contains: Vec<String>,
    pub replies: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "text")]
pub enum MockFallback {
    /// Deterministic text derived from a digest of the prompt.
    #[default]
    Echo,
    Fixed(String),
    /// Fail with [`ClientError::NoReply`].
    Fail,
}

/// On-disk mock fixture.
///
/// ```json
/// { "delay_ms": 0,
///   "rules": [{"contains": ["Role: critic"], "replies": ["REVISE"]}],
///   "script": ["first reply", "second reply"],
///   "fallback": {"mode": "echo"} }
/// ```
///
/// Rules are checked first, then the script is consumed in order, then the
/// fallback answers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockFixture {
    #[serde(default)]
    pub delay_ms: u64,
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default)]
    pub script: Vec<String>,
    #[serde(default)]
    pub fallback: MockFallback,
}

#[derive(Debug, Clone)]
pub struct MockCall {
    pub prompt: String,
    pub reply: Option<String>,
    pub options: CompletionOptions,
    pub started_at: tokio::time::Instant,
    pub finished_at: tokio::time::Instant,
}

#[derive(Debug, Default)]
struct MockState {
    rule_cursor: Vec<usize>,
    script_cursor: usize,
    calls: Vec<MockCall>,
}

/// Scripted client. Never touches the network.
#[derive(Debug)]
pub struct MockClient {
    fixture: MockFixture,
    state: Mutex<MockState>,
}

/// Marker every agent prompt starts with; mock rules key on it.
pub fn role_marker(role: &str) -> String {
    format!("Role: {role}\n")
}

impl MockClient {
    pub fn new(fixture: MockFixture) -> Self {
        let state = MockState {
            rule_cursor: vec![0; fixture.rules.len()],
            ..MockState::default()
        };
        Self {
            fixture,
            state: Mutex::new(state),
        }
    }

    pub fn echo() -> Self {
        Self::new(MockFixture::default())
    }

    /// Replies with `script` in order, then fails.
    pub fn scripted<I, S>(script: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(MockFixture {
            script: script.into_iter().map(Into::into).collect(),
            fallback: MockFallback::Fail,
            ..MockFixture::default()
        })
    }

    /// Never lets loops end early: critics always ask for a revision and
    /// supervisors always route to their first worker.
    pub fn worst_case() -> Self {
        Self::new(Self::worst_case_fixture())
    }

    pub fn worst_case_fixture() -> MockFixture {
        MockFixture {
            rules: vec![
                MockRule {
                    contains: vec![role_marker("critic")],
                    replies: vec!["Needs more work.\nREVISE".into()],
                },
                MockRule {
                    contains: vec![role_marker("supervisor")],
                    replies: vec!["ROUTE:worker_1 continue".into()],
                },
            ],
            ..MockFixture::default()
        }
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text).map(Self::new)
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.fixture.delay_ms = delay.as_millis() as u64;
        self
    }

    pub fn with_rule(mut self, contains: &[&str], replies: &[&str]) -> Self {
        self.fixture.rules.push(MockRule {
            contains: contains.iter().map(|s| s.to_string()).collect(),
            replies: replies.iter().map(|s| s.to_string()).collect(),
        });
        self.state.get_mut().unwrap().rule_cursor.push(0);
        self
    }

    pub fn fixture(&self) -> &MockFixture {
        &self.fixture
    }

    pub fn calls(&self) -> Vec<MockCall> {
        self.state.lock().unwrap().calls.clone()
    }

    pub fn prompts(&self) -> Vec<String> {
        self.calls().into_iter().map(|c| c.prompt).collect()
    }

    pub fn call_count(&self) -> usize {
        self.state.lock().unwrap().calls.len()
    }

    fn reply_for(&self, prompt: &str) -> Option<String> {
        let mut state = self.state.lock().unwrap();
        for (i, rule) in self.fixture.rules.iter().enumerate() {
            if rule.contains.iter().all(|needle| prompt.contains(needle.as_str())) {
                let cursor = state.rule_cursor[i];
                state.rule_cursor[i] = cursor + 1;
                return rule.replies.get(cursor).or(rule.replies.last()).cloned();
            }
        }
        if let Some(reply) = self.fixture.script.get(state.script_cursor) {
            state.script_cursor += 1;
            return Some(reply.clone());
        }
        match &self.fixture.fallback {
            MockFallback::Echo => Some(echo_reply(prompt)),
            MockFallback::Fixed(text) => Some(text.clone()),
            MockFallback::Fail => None,
        }
    }
}

pub fn echo_reply(prompt: &str) -> String {
    let digest = Sha256::digest(prompt.as_bytes());
    let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
    format!("mock reply {hex}")
}

#[async_trait]
impl CompletionClient for MockClient {
    async fn complete(&self, prompt: &str, options: &CompletionOptions) -> Result<Completion, ClientError> {
        let started_at = tokio::time::Instant::now();
        let reply = self.reply_for(prompt);
        if self.fixture.delay_ms > 0 {
            tokio::time::sleep(Duration::from_millis(self.fixture.delay_ms)).await;
        }
        self.state.lock().unwrap().calls.push(MockCall {
            prompt: prompt.to_string(),
            reply: reply.clone(),
            options: options.clone(),
            started_at,
            finished_at: tokio::time::Instant::now(),
        });
        let text = reply.ok_or(ClientError::NoReply)?;
        Ok(Completion {
            tokens_in: approximate_tokens(prompt),
            tokens_out: approximate_tokens(&text),
            text,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptLogEntry {
    pub seq: u64,
    pub operation: String,
    /// Zero for the first attempt, incremented on each repair retry.
    pub attempt: u32,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Append-only log of every generation prompt and raw reply.
#[derive(Debug, Default)]
pub struct PromptLog {
    entries: Mutex<Vec<PromptLogEntry>>,
}

impl PromptLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<PromptLogEntry>) -> Self {
        Self {
            entries: Mutex::new(entries),
        }
    }

    pub fn append(&self, operation: &str, attempt: u32, prompt: &str, outcome: Result<&str, String>) {
        let mut entries = self.entries.lock().unwrap();
        let seq = entries.len() as u64;
        let (reply, error) = match outcome {
            Ok(reply) => (Some(reply.to_string()), None),
            Err(error) => (None, Some(error)),
        };
        entries.push(PromptLogEntry {
            seq,
            operation: operation.to_string(),
            attempt,
            prompt: prompt.to_string(),
            reply,
            error,
        });
    }

    pub fn entries(&self) -> Vec<PromptLogEntry> {
        self.entries.lock().unwrap().clone()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl PartialEq for PromptLog {
    fn eq(&self, other: &Self) -> bool {
        self.entries() == other.entries()
    }
}
