//! OpenAI-compatible chat-completion client: deterministic response cache,
//! retry with exponential backoff (Retry-After honored), a token-bucket
//! rate limiter, and request/token budget accounting.
//!
//! The cache key covers the full request content including sampling
//! parameters, so the first sampled completion is frozen per key and reruns
//! are reproducible. Cache hits perform no network I/O and do not count as
//! requests.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ProviderConfig;
use crate::error::{EvoError, ProviderError};

pub const MAX_ATTEMPTS: u32 = 5;
const MAX_BACKOFF: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Purpose {
    Operator,
    TaskEval,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> ChatMessage {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    /// Ledger tag only; excluded from the wire body and the cache key.
    pub purpose: Purpose,
}

#[derive(Serialize)]
struct WireBody<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
}

impl CompletionRequest {
    fn wire_body(&self) -> WireBody<'_> {
        WireBody {
            model: &self.model,
            messages: &self.messages,
            temperature: self.temperature,
            top_p: self.top_p,
            max_tokens: self.max_tokens,
        }
    }

    /// Digest of (model, messages, temperature, top_p, max_tokens).
    pub fn cache_key(&self) -> String {
        let canonical = serde_json::to_string(&self.wire_body()).expect("request serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
}

/// One raw HTTP exchange, status and body unparsed.
#[derive(Debug, Clone)]
pub struct WireResponse {
    pub status: u16,
    pub body: String,
    pub retry_after: Option<f64>,
    pub request_id: Option<String>,
}

/// The transport boundary; swap in a scripted fake for tests.
pub trait Transport: Send + Sync {
    fn send(&self, request: &CompletionRequest) -> Result<WireResponse, ProviderError>;
}

/// Blocking HTTP transport for `POST {base_url}/v1/chat/completions`.
#[derive(Debug)]
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: String,
}

impl HttpTransport {
    pub fn new(config: &ProviderConfig) -> Result<HttpTransport, EvoError> {
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| ProviderError::MissingCredential(config.api_key_env.clone()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_s))
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(HttpTransport {
            client,
            endpoint: format!(
                "{}/v1/chat/completions",
                config.base_url.trim_end_matches('/')
            ),
            api_key,
        })
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &CompletionRequest) -> Result<WireResponse, ProviderError> {
        let response = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&request.wire_body())
            .send()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let retry_after = response
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.parse::<f64>().ok());
        let request_id = response
            .headers()
            .get("x-request-id")
            .and_then(|v| v.to_str().ok())
            .map(|v| v.to_string());
        let body = response
            .text()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(WireResponse {
            status,
            body,
            retry_after,
            request_id,
        })
    }
}

/// Transport from a plain closure; handy for tests and experiments.
pub struct FnTransport<F>(pub F)
where
    F: Fn(&CompletionRequest) -> Result<WireResponse, ProviderError> + Send + Sync;

impl<F> Transport for FnTransport<F>
where
    F: Fn(&CompletionRequest) -> Result<WireResponse, ProviderError> + Send + Sync,
{
    fn send(&self, request: &CompletionRequest) -> Result<WireResponse, ProviderError> {
        (self.0)(request)
    }
}

/// A plain 200 response wrapping `text` as the assistant message.
pub fn canned_response(text: &str) -> WireResponse {
    WireResponse {
        status: 200,
        body: serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": text}}],
            "usage": {"prompt_tokens": 0, "completion_tokens": 0},
        })
        .to_string(),
        retry_after: None,
        request_id: None,
    }
}

/// Monotone request/token counters for one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetSnapshot {
    pub requests_operator: u64,
    pub requests_task_eval: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cache_hits: u64,
}

impl BudgetSnapshot {
    pub fn total_requests(&self) -> u64 {
        self.requests_operator + self.requests_task_eval
    }
}

#[derive(Default)]
pub struct BudgetLedger {
    state: Mutex<BudgetSnapshot>,
}

impl BudgetLedger {
    pub fn record(&self, purpose: Purpose, usage: Usage) {
        let mut s = self.state.lock().unwrap();
        match purpose {
            Purpose::Operator => s.requests_operator += 1,
            Purpose::TaskEval => s.requests_task_eval += 1,
        }
        s.prompt_tokens += usage.prompt_tokens;
        s.completion_tokens += usage.completion_tokens;
    }

    pub fn record_cache_hit(&self) {
        self.state.lock().unwrap().cache_hits += 1;
    }

    pub fn snapshot(&self) -> BudgetSnapshot {
        *self.state.lock().unwrap()
    }
}

/// `N · T · (1 + |D|)`: requests for T iterations of N candidates, each
/// costing one operator call plus a dev-set evaluation, without caching.
pub fn expected_requests(population_size: u64, iterations: u64, dev_size: u64) -> u64 {
    population_size * iterations * (1 + dev_size)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetReport {
    pub requests_operator: u64,
    pub requests_task_eval: u64,
    pub total_requests: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cache_hits: u64,
    pub cache_hit_rate: f64,
    pub expected_requests: u64,
    pub within_expected: bool,
}

pub fn budget_report(snapshot: &BudgetSnapshot, expected: u64) -> BudgetReport {
    let total = snapshot.total_requests();
    let served = total + snapshot.cache_hits;
    BudgetReport {
        requests_operator: snapshot.requests_operator,
        requests_task_eval: snapshot.requests_task_eval,
        total_requests: total,
        prompt_tokens: snapshot.prompt_tokens,
        completion_tokens: snapshot.completion_tokens,
        cache_hits: snapshot.cache_hits,
        cache_hit_rate: if served == 0 {
            0.0
        } else {
            snapshot.cache_hits as f64 / served as f64
        },
        expected_requests: expected,
        within_expected: total <= expected,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    response: String,
    usage: Usage,
}

struct CacheStore {
    map: HashMap<String, CacheEntry>,
    writer: Option<BufWriter<File>>,
}

impl CacheStore {
    fn open(path: Option<&Path>) -> Result<CacheStore, EvoError> {
        let mut map = HashMap::new();
        let mut writer = None;
        if let Some(path) = path {
            if path.exists() {
                let file = File::open(path)
                    .map_err(|e| EvoError::Io(format!("cannot read {}: {e}", path.display())))?;
                for line in BufReader::new(file).lines() {
                    let line =
                        line.map_err(|e| EvoError::Io(format!("{}: {e}", path.display())))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let entry: CacheEntry = serde_json::from_str(&line)
                        .map_err(|e| EvoError::Io(format!("{}: {e}", path.display())))?;
                    map.insert(entry.key.clone(), entry);
                }
            }
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| EvoError::Io(format!("cannot open {}: {e}", path.display())))?;
            writer = Some(BufWriter::new(file));
        }
        Ok(CacheStore { map, writer })
    }

    fn insert(&mut self, entry: CacheEntry) -> Result<(), EvoError> {
        if self.map.contains_key(&entry.key) {
            return Ok(());
        }
        if let Some(w) = &mut self.writer {
            let line = serde_json::to_string(&entry).expect("entry serializes");
            writeln!(w, "{line}").map_err(|e| EvoError::Io(format!("cache append: {e}")))?;
            w.flush().map_err(|e| EvoError::Io(format!("cache flush: {e}")))?;
        }
        self.map.insert(entry.key.clone(), entry);
        Ok(())
    }
}

struct RateLimiter {
    per_minute: Option<u32>,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    fn new(per_minute: Option<u32>) -> RateLimiter {
        let burst = per_minute.map(|r| r as f64).unwrap_or(0.0);
        RateLimiter {
            per_minute,
            state: Mutex::new((burst, Instant::now())),
        }
    }

    fn acquire(&self) {
        let Some(rate) = self.per_minute else { return };
        let per_second = rate as f64 / 60.0;
        let mut state = self.state.lock().unwrap();
        loop {
            let now = Instant::now();
            let elapsed = now.duration_since(state.1).as_secs_f64();
            state.0 = (state.0 + elapsed * per_second).min(rate as f64);
            state.1 = now;
            if state.0 >= 1.0 {
                state.0 -= 1.0;
                return;
            }
            let wait = (1.0 - state.0) / per_second;
            std::thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

/// The client used by operators and the evaluation harness.
pub struct Provider {
    transport: Box<dyn Transport>,
    cache: Option<Mutex<CacheStore>>,
    ledger: BudgetLedger,
    limiter: RateLimiter,
    backoff: Duration,
}

impl Provider {
    /// `cache_path` is the append-only JSONL store; existing entries are
    /// preloaded, which is what makes warm reruns byte-identical.
    pub fn new(
        config: &ProviderConfig,
        transport: Box<dyn Transport>,
        cache_path: Option<&Path>,
    ) -> Result<Provider, EvoError> {
        let cache = if config.cache {
            Some(Mutex::new(CacheStore::open(cache_path)?))
        } else {
            None
        };
        Ok(Provider {
            transport,
            cache,
            ledger: BudgetLedger::default(),
            limiter: RateLimiter::new(config.requests_per_minute),
            backoff: Duration::from_millis(config.backoff_ms),
        })
    }

    pub fn snapshot(&self) -> BudgetSnapshot {
        self.ledger.snapshot()
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<String, EvoError> {
        let key = request.cache_key();
        if let Some(cache) = &self.cache {
            if let Some(entry) = cache.lock().unwrap().map.get(&key) {
                self.ledger.record_cache_hit();
                return Ok(entry.response.clone());
            }
        }

        let mut attempt = 0;
        let (content, usage) = loop {
            attempt += 1;
            self.limiter.acquire();
            match self.transport.send(request) {
                Ok(resp) if (200..300).contains(&resp.status) => {
                    break parse_completion(&resp.body)?;
                }
                Ok(resp) if resp.status == 429 || resp.status >= 500 => {
                    if attempt >= MAX_ATTEMPTS {
                        return Err(ProviderError::Http {
                            status: resp.status,
                            attempts: attempt,
                            request_id: resp.request_id.unwrap_or_else(|| "unknown".into()),
                        }
                        .into());
                    }
                    self.pause(attempt, resp.retry_after);
                }
                Ok(resp) => {
                    return Err(ProviderError::Http {
                        status: resp.status,
                        attempts: attempt,
                        request_id: resp.request_id.unwrap_or_else(|| "unknown".into()),
                    }
                    .into());
                }
                Err(err) => {
                    if attempt >= MAX_ATTEMPTS {
                        return Err(err.into());
                    }
                    self.pause(attempt, None);
                }
            }
        };

        self.ledger.record(request.purpose, usage);
        if let Some(cache) = &self.cache {
            cache.lock().unwrap().insert(CacheEntry {
                key,
                response: content.clone(),
                usage,
            })?;
        }
        Ok(content)
    }

    fn pause(&self, attempt: u32, retry_after: Option<f64>) {
        let wait = match retry_after {
            Some(seconds) if seconds >= 0.0 => Duration::from_secs_f64(seconds),
            _ => self.backoff.saturating_mul(1 << (attempt - 1).min(8)),
        };
        std::thread::sleep(wait.min(MAX_BACKOFF));
    }
}

fn parse_completion(body: &str) -> Result<(String, Usage), EvoError> {
    let value: serde_json::Value = serde_json::from_str(body)
        .map_err(|e| ProviderError::BadResponse(format!("invalid JSON: {e}")))?;
    let content = value["choices"][0]["message"]["content"]
        .as_str()
        .ok_or_else(|| {
            ProviderError::BadResponse("missing choices[0].message.content".into())
        })?
        .to_string();
    let usage = Usage {
        prompt_tokens: value["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
        completion_tokens: value["usage"]["completion_tokens"].as_u64().unwrap_or(0),
    };
    Ok((content, usage))
}
