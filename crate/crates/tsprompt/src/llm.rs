//! Completion backends: an OpenAI-compatible chat endpoint and an offline
//! mock, plus extraction of the `<comment>` answer.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tsprompt_core::seed::splitmix64;
use tsprompt_core::{MovementLabel, PromptBundle};

/// Environment variable holding the bearer token for HTTP backends.
pub const API_KEY_ENV: &str = "TSPROMPT_API_KEY";

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("invalid backend config: {0}")]
    Config(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("backend returned HTTP {status} after {attempts} attempt(s): {body}")]
    Status { status: u16, body: String, attempts: u32 },
    #[error("unparseable backend response: {0}")]
    Unparseable(String),
    #[error("mock fixtures: {0}")]
    Fixture(String),
    #[error("mock backend injected failure")]
    Injected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpChat,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
    pub model_name: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Delay before the first retry; doubled on each further retry.
    #[serde(default = "default_backoff")]
    pub initial_backoff_ms: u64,
    /// JSONL of `{prompt_sha256, response}` consulted before synthesis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_fixtures: Option<PathBuf>,
    /// Fraction of prompts for which the mock fails, chosen by prompt hash.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub mock_failure_rate: f64,
}

fn default_max_output_tokens() -> u32 {
    256
}
fn default_timeout() -> f64 {
    60.0
}
fn default_max_retries() -> u32 {
    3
}
fn default_parallelism() -> usize {
    1
}
fn default_backoff() -> u64 {
    500
}
fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl BackendConfig {
    pub fn mock(model_name: impl Into<String>) -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            endpoint_url: None,
            model_name: model_name.into(),
            temperature: 0.0,
            max_output_tokens: default_max_output_tokens(),
            request_timeout_secs: default_timeout(),
            max_retries: default_max_retries(),
            parallelism: default_parallelism(),
            initial_backoff_ms: default_backoff(),
            mock_fixtures: None,
            mock_failure_rate: 0.0,
        }
    }

    pub fn http_chat(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        BackendConfig { kind: BackendKind::HttpChat, endpoint_url: Some(endpoint_url.into()), ..Self::mock(model_name) }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |m: &str| Err(BackendError::Config(m.into()));
        if self.model_name.trim().is_empty() {
            return bad("model_name must be non-empty");
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be a finite number >= 0");
        }
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1");
        }
        if self.max_output_tokens == 0 {
            return bad("max_output_tokens must be at least 1");
        }
        if !(self.request_timeout_secs > 0.0 && self.request_timeout_secs.is_finite()) {
            return bad("request_timeout_secs must be positive");
        }
        if !(0.0..=1.0).contains(&self.mock_failure_rate) {
            return bad("mock_failure_rate must be within [0, 1]");
        }
        if self.kind == BackendKind::HttpChat && self.endpoint_url.as_deref().is_none_or(|u| u.trim().is_empty()) {
            return bad("endpoint_url is required for http_chat");
        }
        Ok(())
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.request_timeout_secs)
    }
}

/// One backend answer.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub retries: u32,
    pub latency: Duration,
    pub meta: BTreeMap<String, String>,
}

pub trait Backend: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<Completion, BackendError>;
}

pub fn build_backend(config: &BackendConfig) -> Result<Box<dyn Backend>, BackendError> {
    config.validate()?;
    Ok(match config.kind {
        BackendKind::HttpChat => Box::new(HttpChatBackend::new(config.clone())?),
        BackendKind::Mock => Box::new(MockBackend::new(config.clone())?),
    })
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
pub struct Permits {
    available: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a>(&'a Permits);

impl Permits {
    pub fn new(n: usize) -> Self {
        Permits { available: Mutex::new(n), freed: Condvar::new() }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().unwrap_or_else(|p| p.into_inner());
        while *n == 0 {
            n = self.freed.wait(n).unwrap_or_else(|p| p.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap_or_else(|p| p.into_inner()) += 1;
        self.0.freed.notify_one();
    }
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Chat-completions client. The whole prompt is sent as one user message.
pub struct HttpChatBackend {
    config: BackendConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    permits: Permits,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    model: Option<String>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChatReply {
    content: Option<String>,
}

enum Attempt {
    Retryable(BackendError),
    Fatal(BackendError),
}

impl HttpChatBackend {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(config.request_timeout())
            .build()
            .map_err(|e| BackendError::Config(format!("cannot build HTTP client: {e}")))?;
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        if api_key.is_none() {
            warn!("{API_KEY_ENV} is not set; sending requests without authorization");
        }
        let permits = Permits::new(config.parallelism);
        Ok(HttpChatBackend { config, client, api_key, permits })
    }

    fn attempt(&self, prompt: &str, attempts: u32) -> Result<Completion, Attempt> {
        let url = self.config.endpoint_url.as_deref().unwrap_or_default();
        let body = ChatRequest {
            model: &self.config.model_name,
            messages: [ChatMessage { role: "user", content: prompt }],
            temperature: self.config.temperature,
            max_tokens: self.config.max_output_tokens,
        };
        let mut request = self.client.post(url).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let started = Instant::now();
        let response = {
            let _permit = self.permits.acquire();
            request.send().and_then(|r| {
                let status = r.status();
                r.text().map(|t| (status, t))
            })
        };
        let (status, text) = response.map_err(|e| {
            if e.is_timeout() {
                Attempt::Retryable(BackendError::Timeout { attempts })
            } else {
                Attempt::Retryable(BackendError::Transport { attempts, message: e.to_string() })
            }
        })?;
        let latency = started.elapsed();
        if !status.is_success() {
            let err = BackendError::Status { status: status.as_u16(), body: truncate(&text, 2000), attempts };
            return Err(if status.as_u16() == 429 || status.is_server_error() {
                Attempt::Retryable(err)
            } else {
                Attempt::Fatal(err)
            });
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| Attempt::Fatal(BackendError::Unparseable(e.to_string())))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| Attempt::Fatal(BackendError::Unparseable("no choices".into())))?;
        let content = choice
            .message
            .content
            .ok_or_else(|| Attempt::Fatal(BackendError::Unparseable("choice has no message content".into())))?;
        let mut meta = BTreeMap::new();
        meta.insert("backend".into(), "http_chat".into());
        meta.insert("model".into(), parsed.model.unwrap_or_else(|| self.config.model_name.clone()));
        if let Some(reason) = choice.finish_reason {
            meta.insert("finish_reason".into(), reason);
        }
        Ok(Completion { text: content, retries: 0, latency, meta })
    }
}

fn truncate(s: &str, max_chars: usize) -> String {
    match s.char_indices().nth(max_chars) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_owned(),
    }
}

impl Backend for HttpChatBackend {
    fn complete(&self, prompt: &str) -> Result<Completion, BackendError> {
        if prompt.is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        let mut backoff = Duration::from_millis(self.config.initial_backoff_ms);
        let mut retries = 0;
        loop {
            match self.attempt(prompt, retries + 1) {
                Ok(mut c) => {
                    c.retries = retries;
                    c.meta.insert("retries".into(), retries.to_string());
                    return Ok(c);
                }
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retryable(e)) if retries < self.config.max_retries => {
                    debug!("retrying after {backoff:?}: {e}");
                    std::thread::sleep(backoff);
                    backoff = backoff.saturating_mul(2);
                    retries += 1;
                }
                Err(Attempt::Retryable(e)) => return Err(e),
            }
        }
    }
}

#[derive(Deserialize)]
struct FixtureLine {
    prompt_sha256: String,
    response: String,
}

/// Offline backend: looks the prompt hash up in a fixture table, otherwise
/// synthesises a comment from the hash of (model name, prompt).
pub struct MockBackend {
    config: BackendConfig,
    fixtures: HashMap<String, String>,
}

const MOCK_TERMS: [&str; 7] = ["続伸", "反発", "続落", "反落", "上昇", "下落", "小動き"];

impl MockBackend {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        let fixtures = match &config.mock_fixtures {
            Some(path) => load_fixtures(path)?,
            None => HashMap::new(),
        };
        Ok(MockBackend { config, fixtures })
    }

    fn hash(&self, prompt: &str) -> u64 {
        let digest = Sha256::new()
            .chain_update(self.config.model_name.as_bytes())
            .chain_update([0u8])
            .chain_update(prompt.as_bytes())
            .finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }

    fn synthesize(&self, prompt: &str, h: u64) -> String {
        let h1 = splitmix64(h);
        let h2 = splitmix64(h1);
        // With shots present, sometimes echo the closest exemplar verbatim.
        if let Some(last) = last_exemplar_comment(prompt) {
            if h1.is_multiple_of(3) {
                return format!("<comment>{last}</comment>");
            }
        }
        let term = MOCK_TERMS[(h1 % MOCK_TERMS.len() as u64) as usize];
        let moves = h2 % 500;
        let side = if term.contains('落') || term == "下落" { "安" } else { "高" };
        let session = if h2.is_multiple_of(2) { "前引け" } else { "大引け" };
        if term == "小動き" {
            format!("<comment>日経平均、{term} {session}は{}円</comment>", 9000 + h2 % 2000)
        } else {
            format!("<comment>日経平均、{term} {session}は{moves}円{side}</comment>")
        }
    }
}

fn last_exemplar_comment(prompt: &str) -> Option<&str> {
    let blocks: Vec<&str> = prompt.split("\n###\n").collect();
    if blocks.len() < 3 {
        return None;
    }
    let shot = blocks[blocks.len() - 2];
    let (_, after) = shot.rsplit_once("\nOutput:\n")?;
    let comment = after.trim();
    (!comment.is_empty()).then_some(comment)
}

fn load_fixtures(path: &Path) -> Result<HashMap<String, String>, BackendError> {
    let text = std::fs::read_to_string(path).map_err(|e| BackendError::Fixture(format!("{}: {e}", path.display())))?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: FixtureLine = serde_json::from_str(line)
            .map_err(|e| BackendError::Fixture(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.insert(f.prompt_sha256.to_ascii_lowercase(), f.response);
    }
    Ok(out)
}

impl Backend for MockBackend {
    fn complete(&self, prompt: &str) -> Result<Completion, BackendError> {
        if prompt.is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        let mut meta = BTreeMap::new();
        meta.insert("backend".into(), "mock".into());
        meta.insert("model".into(), self.config.model_name.clone());
        let text = if let Some(hit) = self.fixtures.get(&sha256_hex(prompt)) {
            meta.insert("source".into(), "fixture".into());
            hit.clone()
        } else {
            let h = self.hash(prompt);
            if self.config.mock_failure_rate > 0.0
                && ((h >> 11) as f64 / (1u64 << 53) as f64) < self.config.mock_failure_rate
            {
                return Err(BackendError::Injected);
            }
            meta.insert("source".into(), "synthetic".into());
            self.synthesize(prompt, h)
        };
        Ok(Completion { text, retries: 0, latency: Duration::ZERO, meta })
    }
}

const OPEN: &str = "<comment>";
const CLOSE: &str = "</comment>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extraction {
    /// Non-empty and free of comment markers when present.
    pub comment: Option<String>,
    /// True when no well-formed `<comment>...</comment>` pair was found.
    pub untagged: bool,
}

/// Content of the first `<comment>...</comment>` pair, or the whole response
/// when no pair exists; trimmed and stripped of stray markers.
pub fn extract_comment(raw: &str) -> Extraction {
    let tagged = raw.find(OPEN).and_then(|start| {
        let body = &raw[start + OPEN.len()..];
        body.find(CLOSE).map(|end| &body[..end])
    });
    let (text, untagged) = match tagged {
        Some(t) => (t, false),
        None => (raw, true),
    };
    let cleaned = text.replace(OPEN, "").replace(CLOSE, "");
    let cleaned = cleaned.trim();
    Extraction { comment: (!cleaned.is_empty()).then(|| cleaned.to_owned()), untagged }
}

/// One prompt, its answer and bookkeeping, as persisted by the runner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub plan_id: String,
    pub repeat_index: usize,
    pub instance_id: String,
    pub bundle: PromptBundle,
    pub prompt_sha256: String,
    pub prompt_chars: usize,
    pub reference_comment: String,
    /// Absent when the instance lacks the closes needed for a label.
    pub gold_label: Option<MovementLabel>,
    pub raw_response: Option<String>,
    pub extracted_comment: Option<String>,
    pub untagged: bool,
    pub latency_ms: u64,
    pub retries: u32,
    pub error: Option<String>,
    pub backend_meta: BTreeMap<String, String>,
}

impl GenerationRecord {
    pub fn succeeded(&self) -> bool {
        self.error.is_none() && self.extracted_comment.is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extract_examples() {
        let e = extract_comment("<comment>日経平均、続伸</comment>");
        assert_eq!(e, Extraction { comment: Some("日経平均、続伸".into()), untagged: false });
        let e = extract_comment("no tags here");
        assert_eq!(e, Extraction { comment: Some("no tags here".into()), untagged: true });
        assert_eq!(extract_comment("<comment></comment>").comment, None);
        assert_eq!(extract_comment("  <comment>  </comment> tail").comment, None);
        assert_eq!(extract_comment("").comment, None);
    }

    #[test]
    fn first_pair_wins_and_markers_are_stripped() {
        let e = extract_comment("x <comment> a </comment><comment>b</comment>");
        assert_eq!(e.comment.as_deref(), Some("a"));
        let e = extract_comment("<comment>a<comment>b</comment>");
        assert_eq!(e.comment.as_deref(), Some("ab"));
        let e = extract_comment("dangling <comment>text");
        assert_eq!(e.comment.as_deref(), Some("dangling text"));
        assert!(e.untagged);
    }

    proptest::proptest! {
        #[test]
        fn extraction_is_idempotent(raw in "(<comment>|</comment>| |a|続伸|\n){0,12}") {
            if let Some(c) = extract_comment(&raw).comment {
                proptest::prop_assert!(!c.contains(OPEN) && !c.contains(CLOSE));
                proptest::prop_assert_eq!(extract_comment(&c).comment, Some(c.clone()));
            }
        }
    }

    #[test]
    fn mock_is_deterministic_and_model_dependent() {
        let a = MockBackend::new(BackendConfig::mock("m1")).unwrap();
        let b = MockBackend::new(BackendConfig::mock("m2")).unwrap();
        let prompts: Vec<String> = (0..50).map(|i| format!("prompt {i}")).collect();
        let ra: Vec<_> = prompts.iter().map(|p| a.complete(p).unwrap().text).collect();
        let ra2: Vec<_> = prompts.iter().map(|p| a.complete(p).unwrap().text).collect();
        let rb: Vec<_> = prompts.iter().map(|p| b.complete(p).unwrap().text).collect();
        assert_eq!(ra, ra2);
        assert_ne!(ra, rb);
        assert!(ra.iter().all(|r| !extract_comment(r).untagged));
        assert!(matches!(a.complete(""), Err(BackendError::EmptyPrompt)));
    }

    #[test]
    fn mock_fixture_lookup() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fx.jsonl");
        let line = serde_json::json!({"prompt_sha256": sha256_hex("hello"), "response": "<comment>固定</comment>"});
        std::fs::write(&path, format!("{line}\n")).unwrap();
        let cfg = BackendConfig { mock_fixtures: Some(path), ..BackendConfig::mock("m") };
        let mock = MockBackend::new(cfg).unwrap();
        let c = mock.complete("hello").unwrap();
        assert_eq!(c.text, "<comment>固定</comment>");
        assert_eq!(c.meta["source"], "fixture");
        assert_eq!(mock.complete("other").unwrap().meta["source"], "synthetic");
    }

    #[test]
    fn mock_failure_rate_is_roughly_honoured() {
        let cfg = BackendConfig { mock_failure_rate: 0.25, ..BackendConfig::mock("m") };
        let mock = MockBackend::new(cfg).unwrap();
        let failures = (0..4000).filter(|i| mock.complete(&format!("p{i}")).is_err()).count();
        assert!((800..1200).contains(&failures), "{failures}");
    }

    #[test]
    fn echoes_exemplar_from_few_shot_prompt() {
        let prompt = "INSTR\n\n###\n\nInput:\n1\n2\nOutput:\n日経平均、反発\n\n###\n\nInput:\n3\n4\nOutput: ";
        assert_eq!(last_exemplar_comment(prompt), Some("日経平均、反発"));
        assert_eq!(last_exemplar_comment("INSTR\n\n###\n\nInput:\n3\n4\nOutput: "), None);
    }

    #[test]
    fn config_validation() {
        assert!(BackendConfig::mock("m").validate().is_ok());
        assert!(BackendConfig { parallelism: 0, ..BackendConfig::mock("m") }.validate().is_err());
        assert!(BackendConfig { temperature: -1.0, ..BackendConfig::mock("m") }.validate().is_err());
        let http = BackendConfig { kind: BackendKind::HttpChat, ..BackendConfig::mock("m") };
        assert!(http.validate().is_err());
        assert!(BackendConfig::http_chat("http://x", "m").validate().is_ok());
    }

    #[test]
    fn permits_bound_concurrency() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let permits = Permits::new(3);
        let current = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..12 {
                s.spawn(|| {
                    let _p = permits.acquire();
                    let now = current.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(5));
                    current.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 3);
    }
}
