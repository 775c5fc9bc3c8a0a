//! Completion clients: an OpenAI-style HTTP client and a scripted mock.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub n: usize,
    pub max_tokens: u32,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("endpoint unreachable: {0}")]
    Unreachable(String),
    #[error("authentication failed")]
    AuthFailed,
    #[error("request timed out")]
    Timeout,
    #[error("bad response: {0}")]
    BadResponse(String),
    #[error("API token variable `{0}` is not set")]
    MissingToken(String),
}

pub trait CompletionClient: Send + Sync {
    /// Up to `req.n` completions (fewer only if the backend runs dry).
    fn complete(&self, req: &CompletionRequest) -> Result<Vec<String>, LlmError>;
    fn describe(&self) -> String;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_seconds: f64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub max_concurrency: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "default".into(),
            api_key_env: "HPCT_LLM_API_KEY".into(),
            timeout_seconds: 120.0,
            max_retries: 3,
            backoff_base_ms: 500,
            max_concurrency: 2,
        }
    }
}

struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore {
            permits: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut p = self.permits.lock().unwrap_or_else(|e| e.into_inner());
        while *p == 0 {
            p = self.cv.wait(p).unwrap_or_else(|e| e.into_inner());
        }
        *p -= 1;
        SemaphoreGuard(self)
    }
}

struct SemaphoreGuard<'a>(&'a Semaphore);

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Chat-completions client. The token is read from the environment at
/// construction and never logged.
pub struct HttpClient {
    config: LlmConfig,
    token: Option<String>,
    http: reqwest::blocking::Client,
    gate: Semaphore,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

enum Attempt {
    Retry(LlmError),
    Fatal(LlmError),
}

impl HttpClient {
    /// Fails if the configured token variable is unset. Use
    /// [`HttpClient::without_token`] for local endpoints that need none.
    pub fn new(config: LlmConfig) -> Result<Self, LlmError> {
        let token = std::env::var(&config.api_key_env).map_err(|_| LlmError::MissingToken(config.api_key_env.clone()))?;
        Self::build(config, Some(token))
    }

    pub fn without_token(config: LlmConfig) -> Result<Self, LlmError> {
        Self::build(config, None)
    }

    fn build(config: LlmConfig, token: Option<String>) -> Result<Self, LlmError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_seconds.max(0.1)))
            .build()
            .map_err(|e| LlmError::Unreachable(e.to_string()))?;
        let gate = Semaphore::new(config.max_concurrency);
        Ok(HttpClient {
            config,
            token,
            http,
            gate,
        })
    }

    fn attempt(&self, req: &CompletionRequest, n: usize) -> Result<Vec<String>, Attempt> {
        let body = serde_json::json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
            "temperature": req.temperature,
            "n": n,
            "max_tokens": req.max_tokens,
        });
        let mut rb = self.http.post(&self.config.endpoint).json(&body);
        if let Some(t) = &self.token {
            rb = rb.bearer_auth(t);
        }
        let resp = rb.send().map_err(|e| {
            if e.is_timeout() {
                Attempt::Fatal(LlmError::Timeout)
            } else {
                Attempt::Retry(LlmError::Unreachable(e.without_url().to_string()))
            }
        })?;
        let status = resp.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(Attempt::Fatal(LlmError::AuthFailed));
        }
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Attempt::Retry(LlmError::Unreachable(format!("HTTP {}", status.as_u16()))));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(LlmError::BadResponse(format!("HTTP {}", status.as_u16()))));
        }
        let parsed: ChatResponse = resp.json().map_err(|e| {
            if e.is_timeout() {
                Attempt::Fatal(LlmError::Timeout)
            } else {
                Attempt::Fatal(LlmError::BadResponse(e.without_url().to_string()))
            }
        })?;
        Ok(parsed.choices.into_iter().filter_map(|c| c.message.content).collect())
    }

    fn request_with_retries(&self, req: &CompletionRequest, n: usize) -> Result<Vec<String>, LlmError> {
        let _permit = self.gate.acquire();
        let mut last = LlmError::Unreachable("no attempt made".into());
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                let wait = self.config.backoff_base_ms.saturating_mul(1 << (attempt - 1).min(16));
                log::debug!("retrying completion request in {wait} ms");
                std::thread::sleep(Duration::from_millis(wait));
            }
            match self.attempt(req, n) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) => {
                    log::warn!("completion request failed: {e}");
                    last = e;
                }
            }
        }
        Err(last)
    }
}

impl CompletionClient for HttpClient {
    fn complete(&self, req: &CompletionRequest) -> Result<Vec<String>, LlmError> {
        let want = req.n.max(1);
        let mut out = self.request_with_retries(req, want)?;
        // some servers ignore `n`; top up with further requests
        let mut rounds = 0;
        while out.len() < want && rounds < want {
            let more = self.request_with_retries(req, want - out.len())?;
            if more.is_empty() {
                break;
            }
            out.extend(more);
            rounds += 1;
        }
        out.truncate(want);
        Ok(out)
    }

    fn describe(&self) -> String {
        format!("http:{}@{}", self.config.model, self.config.endpoint)
    }
}

/// Replays canned completions in order. Each call consumes up to `n`
/// entries; an exhausted script reports the endpoint as unreachable.
pub struct ScriptedMock {
    script: Vec<String>,
    cursor: Mutex<usize>,
    cycle: bool,
    calls: AtomicUsize,
}

impl ScriptedMock {
    pub fn new(script: Vec<String>) -> Self {
        ScriptedMock {
            script,
            cursor: Mutex::new(0),
            cycle: false,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn cycling(script: Vec<String>) -> Self {
        ScriptedMock {
            cycle: true,
            ..Self::new(script)
        }
    }

    /// Script file: a JSON array of strings, or
    /// `{"cycle": true, "responses": [...]}` to replay forever.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        #[derive(serde::Deserialize)]
        #[serde(untagged)]
        enum Script {
            Plain(Vec<String>),
            Tagged {
                #[serde(default)]
                cycle: bool,
                responses: Vec<String>,
            },
        }
        Ok(match serde_json::from_str(text)? {
            Script::Plain(r) => Self::new(r),
            Script::Tagged { cycle: true, responses } => Self::cycling(responses),
            Script::Tagged { responses, .. } => Self::new(responses),
        })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl CompletionClient for ScriptedMock {
    fn complete(&self, req: &CompletionRequest) -> Result<Vec<String>, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut cur = self.cursor.lock().unwrap_or_else(|e| e.into_inner());
        if self.script.is_empty() || (!self.cycle && *cur >= self.script.len()) {
            return Err(LlmError::Unreachable("mock script exhausted".into()));
        }
        let mut out = Vec::new();
        for _ in 0..req.n.max(1) {
            if *cur >= self.script.len() {
                if self.cycle {
                    *cur = 0;
                } else {
                    break;
                }
            }
            out.push(self.script[*cur].clone());
            *cur += 1;
        }
        Ok(out)
    }

    fn describe(&self) -> String {
        format!("mock:{} entries", self.script.len())
    }
}
